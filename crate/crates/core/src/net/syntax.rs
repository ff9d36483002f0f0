//! IMAP lexical layer shared by the client and the mock's socket shim.

/// A logical line: text pieces interleaved with the literals that followed
/// `{n}` markers (the markers themselves are removed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Part {
    Text(String),
    Literal(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Token {
    Atom(String),
    Quoted(String),
    Literal(Vec<u8>),
    Open,
    Close,
}

impl Token {
    /// Value of an atom, quoted string or UTF-8 literal.
    pub(crate) fn as_string(&self) -> Option<String> {
        match self {
            Token::Atom(s) | Token::Quoted(s) => Some(s.clone()),
            Token::Literal(b) => String::from_utf8(b.clone()).ok(),
            _ => None,
        }
    }

    pub(crate) fn is_atom(&self, word: &str) -> bool {
        matches!(self, Token::Atom(a) if a.eq_ignore_ascii_case(word))
    }
}

/// If `line` ends with a literal marker `{n}` or `{n+}`, returns the text
/// before it and `n`.
pub(crate) fn literal_marker(line: &str) -> Option<(&str, usize)> {
    let body = line.strip_suffix('}')?;
    let open = body.rfind('{')?;
    let digits = body[open + 1..].trim_end_matches('+');
    let n = digits.parse().ok()?;
    Some((&line[..open], n))
}

pub(crate) fn tokenize(parts: &[Part]) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    for part in parts {
        match part {
            Part::Literal(b) => out.push(Token::Literal(b.clone())),
            Part::Text(t) => tokenize_text(t, &mut out)?,
        }
    }
    Ok(out)
}

fn tokenize_text(text: &str, out: &mut Vec<Token>) -> Result<(), String> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            ' ' => i += 1,
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(format!("unterminated quoted string in {text:?}")),
                        Some('"') => {
                            i += 1;
                            break;
                        }
                        Some('\\') => {
                            let c = chars.get(i + 1).ok_or("dangling escape")?;
                            s.push(*c);
                            i += 2;
                        }
                        Some(c) => {
                            s.push(*c);
                            i += 1;
                        }
                    }
                }
                out.push(Token::Quoted(s));
            }
            _ => {
                // atoms may carry a bracketed section with spaces: BODY[HEADER.FIELDS (A B)]
                let mut s = String::new();
                let mut depth = 0usize;
                while let Some(&c) = chars.get(i) {
                    if depth == 0 && (c == ' ' || c == '(' || c == ')') {
                        break;
                    }
                    match c {
                        '[' => depth += 1,
                        ']' => depth = depth.saturating_sub(1),
                        _ => {}
                    }
                    s.push(c);
                    i += 1;
                }
                out.push(Token::Atom(s));
            }
        }
    }
    Ok(())
}

/// Quoted-string form of `s`.
pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Index of the token closing the list opened at `open`.
pub(crate) fn matching_close(tokens: &[Token], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (i, t) in tokens.iter().enumerate().skip(open) {
        match t {
            Token::Open => depth += 1,
            Token::Close => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses a uid set like `5`, `1:*`, `3:7,9` against the largest uid present.
pub(crate) fn parse_uid_set(set: &str, max: u64) -> Option<Vec<(u64, u64)>> {
    let bound = |s: &str| if s == "*" { Some(max) } else { s.parse().ok() };
    set.split(',')
        .map(|r| match r.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (bound(a)?, bound(b)?);
                Some((a.min(b), a.max(b)))
            }
            None => bound(r).map(|v| (v, v)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_fetch_response() {
        let parts = vec![
            Part::Text("1 FETCH (UID 7 RFC822.SIZE 42 BODY[HEADER.FIELDS (A B)] ".into()),
            Part::Literal(b"A: 1\r\n".to_vec()),
            Part::Text(" FLAGS (\\Seen))".into()),
        ];
        let t = tokenize(&parts).unwrap();
        assert_eq!(t[0], Token::Atom("1".into()));
        assert_eq!(t[2], Token::Open);
        assert_eq!(t[7], Token::Atom("BODY[HEADER.FIELDS (A B)]".into()));
        assert_eq!(t[8], Token::Literal(b"A: 1\r\n".to_vec()));
        assert_eq!(matching_close(&t, 2), Some(t.len() - 1));
    }

    #[test]
    fn quoting_roundtrip() {
        let q = quote(r#"a "b" \c"#);
        let t = tokenize(&[Part::Text(q)]).unwrap();
        assert_eq!(t, vec![Token::Quoted(r#"a "b" \c"#.into())]);
    }

    #[test]
    fn literal_markers_and_uid_sets() {
        assert_eq!(
            literal_marker("A1 APPEND x {12}"),
            Some(("A1 APPEND x ", 12))
        );
        assert_eq!(literal_marker("A1 LOGIN u {3+}"), Some(("A1 LOGIN u ", 3)));
        assert_eq!(literal_marker("A1 NOOP"), None);
        assert_eq!(parse_uid_set("1:*", 9), Some(vec![(1, 9)]));
        assert_eq!(parse_uid_set("3,5:4", 9), Some(vec![(3, 3), (4, 5)]));
        assert_eq!(parse_uid_set("x", 9), None);
    }
}
