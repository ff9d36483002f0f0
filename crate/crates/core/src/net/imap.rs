use log::debug;
use utf7_imap::{decode_utf7_imap, encode_utf7_imap};

use super::conn::Connection;
use super::implicit_tls;
use super::syntax::{literal_marker, matching_close, quote, tokenize, Part, Token};
use crate::codec::{parse_headers, payload_len_from_wrapped, split_message};
use crate::transport::{
    Endpoint, HeaderSummary, ListedMessage, MailboxPath, MessageHandle, TransportError, DELIMITER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    No,
    Bad,
}

struct Completion {
    status: Status,
    text: String,
    untagged: Vec<Vec<Token>>,
}

impl Completion {
    fn ok(self, what: &str) -> Result<Self, TransportError> {
        match self.status {
            Status::Ok => Ok(self),
            _ => Err(TransportError::Protocol(format!("{what}: {}", self.text))),
        }
    }

    /// `[NAME a b c]` response code from the tagged line or an untagged OK.
    fn response_code(&self, name: &str) -> Option<Vec<String>> {
        let from_text = |t: &str| -> Option<Vec<String>> {
            let start = t.find('[')?;
            let end = t[start..].find(']')? + start;
            let mut words = t[start + 1..end].split_whitespace();
            words
                .next()
                .filter(|w| w.eq_ignore_ascii_case(name))
                .map(|_| words.map(str::to_owned).collect())
        };
        from_text(&self.text).or_else(|| {
            self.untagged.iter().find_map(|u| match u.first() {
                Some(t) if t.is_atom("OK") => u.iter().skip(1).find_map(|t| match t {
                    Token::Atom(a) => from_text(a),
                    _ => None,
                }),
                _ => None,
            })
        })
    }
}

/// One argument of an outgoing command.
enum Arg<'a> {
    Raw(&'a str),
    Literal(&'a [u8]),
}

pub(crate) struct ImapClient {
    conn: Connection,
    next_tag: u32,
    capabilities: Vec<String>,
    delimiter: Option<char>,
    selected: Option<String>,
}

impl ImapClient {
    pub(crate) fn connect(
        endpoint: &Endpoint,
        use_tls: bool,
        username: &str,
        password: &str,
    ) -> Result<Self, TransportError> {
        let mut conn = Connection::open(endpoint)?;
        let implicit = use_tls && implicit_tls(endpoint.port);
        if implicit {
            conn.upgrade()?;
        }
        let mut client = Self {
            conn,
            next_tag: 0,
            capabilities: Vec::new(),
            delimiter: None,
            selected: None,
        };
        let greeting = client.conn.read_line()?;
        if !greeting.starts_with("* OK") && !greeting.starts_with("* PREAUTH") {
            return Err(TransportError::ConnectFailed(format!(
                "IMAP greeting {greeting:?}"
            )));
        }
        client.refresh_capabilities()?;
        if use_tls && !implicit {
            if !client.has_capability("STARTTLS") {
                return Err(TransportError::TlsUnavailable);
            }
            if client.run(&[Arg::Raw("STARTTLS")])?.status != Status::Ok {
                return Err(TransportError::TlsUnavailable);
            }
            client.conn.upgrade()?;
            client.refresh_capabilities()?;
        }
        let quoted_user = quote(username);
        let quoted_password;
        let password_arg = if password.is_ascii() && !password.contains(['\r', '\n']) {
            quoted_password = quote(password);
            Arg::Raw(&quoted_password)
        } else {
            Arg::Literal(password.as_bytes())
        };
        let login = client.run(&[
            Arg::Raw("LOGIN "),
            Arg::Raw(&quoted_user),
            Arg::Raw(" "),
            password_arg,
        ])?;
        if login.status != Status::Ok {
            return Err(TransportError::AuthFailed);
        }
        client.refresh_capabilities()?;
        client.delimiter = client.query_delimiter()?;
        Ok(client)
    }

    pub(crate) fn is_tls(&self) -> bool {
        self.conn.is_tls()
    }

    fn has_capability(&self, cap: &str) -> bool {
        self.capabilities
            .iter()
            .any(|c| c.eq_ignore_ascii_case(cap))
    }

    fn refresh_capabilities(&mut self) -> Result<(), TransportError> {
        let done = self.run(&[Arg::Raw("CAPABILITY")])?.ok("CAPABILITY")?;
        self.capabilities = done
            .untagged
            .iter()
            .filter(|u| u.first().is_some_and(|t| t.is_atom("CAPABILITY")))
            .flat_map(|u| u.iter().skip(1).filter_map(Token::as_string))
            .collect();
        Ok(())
    }

    fn query_delimiter(&mut self) -> Result<Option<char>, TransportError> {
        let done = self.run(&[Arg::Raw("LIST \"\" \"\"")])?.ok("LIST")?;
        Ok(done
            .untagged
            .iter()
            .find_map(|u| list_entry(u).and_then(|(delim, _)| delim)))
    }

    fn read_logical_line(&mut self) -> Result<Vec<Part>, TransportError> {
        let mut parts = Vec::new();
        loop {
            let line = self.conn.read_line()?;
            match literal_marker(&line) {
                Some((text, n)) => {
                    parts.push(Part::Text(text.to_owned()));
                    parts.push(Part::Literal(self.conn.read_exact(n)?));
                }
                None => {
                    parts.push(Part::Text(line));
                    return Ok(parts);
                }
            }
        }
    }

    /// Sends one tagged command and collects everything up to its completion.
    fn run(&mut self, args: &[Arg<'_>]) -> Result<Completion, TransportError> {
        self.next_tag += 1;
        let tag = format!("E{:04}", self.next_tag);
        let mut pending = format!("{tag} ");
        for arg in args {
            match arg {
                Arg::Raw(s) => pending.push_str(s),
                Arg::Literal(bytes) => {
                    pending.push_str(&format!("{{{}}}\r\n", bytes.len()));
                    debug!("imap -> {}", pending.trim_end());
                    self.conn.write_all(pending.as_bytes())?;
                    pending.clear();
                    self.await_continuation()?;
                    self.conn.write_all(bytes)?;
                }
            }
        }
        pending.push_str("\r\n");
        if !pending.contains("LOGIN") {
            debug!("imap -> {}", pending.trim_end());
        }
        self.conn.write_all(pending.as_bytes())?;

        let mut untagged = Vec::new();
        loop {
            let parts = self.read_logical_line()?;
            let first = match parts.first() {
                Some(Part::Text(t)) => t.clone(),
                _ => String::new(),
            };
            if let Some(rest) = first.strip_prefix("* ") {
                let mut p = parts.clone();
                p[0] = Part::Text(rest.to_owned());
                untagged.push(tokenize(&p).map_err(TransportError::Protocol)?);
            } else if let Some(rest) = first.strip_prefix(&format!("{tag} ")) {
                debug!("imap <- {tag} {rest}");
                let (word, text) = rest.split_once(' ').unwrap_or((rest, ""));
                let status = match word.to_ascii_uppercase().as_str() {
                    "OK" => Status::Ok,
                    "NO" => Status::No,
                    _ => Status::Bad,
                };
                return Ok(Completion {
                    status,
                    text: text.to_owned(),
                    untagged,
                });
            } else if first.starts_with('+') {
                // stray continuation, nothing to send
            } else {
                return Err(TransportError::Protocol(format!(
                    "unexpected IMAP line {first:?}"
                )));
            }
        }
    }

    fn await_continuation(&mut self) -> Result<(), TransportError> {
        loop {
            let line = self.conn.read_line()?;
            if line.starts_with('+') {
                return Ok(());
            }
            if !line.starts_with("* ") {
                return Err(TransportError::Protocol(format!(
                    "server refused literal: {line}"
                )));
            }
        }
    }

    fn delim(&self) -> char {
        self.delimiter.unwrap_or(DELIMITER)
    }

    fn server_name(&self, path: &MailboxPath) -> Result<String, TransportError> {
        if path.is_inbox() {
            return Ok("INBOX".into());
        }
        let delim = self.delim();
        let mut out = Vec::with_capacity(path.depth());
        for seg in path.segments() {
            if seg.contains(delim) {
                return Err(TransportError::InvalidFolderName(seg.clone()));
            }
            out.push(encode_utf7_imap(seg.clone()));
        }
        Ok(out.join(&delim.to_string()))
    }

    fn path_from_server(&self, name: &str) -> Result<MailboxPath, TransportError> {
        let delim = self.delim();
        MailboxPath::new(name.split(delim).map(|s| decode_utf7_imap(s.to_owned())))
    }

    fn list(&mut self, pattern: &str) -> Result<Vec<String>, TransportError> {
        let done = self
            .run(&[Arg::Raw("LIST \"\" "), Arg::Raw(&quote(pattern))])?
            .ok("LIST")?;
        Ok(done
            .untagged
            .iter()
            .filter_map(|u| list_entry(u).map(|(_, name)| name))
            .collect())
    }

    pub(crate) fn exists(&mut self, path: &MailboxPath) -> Result<bool, TransportError> {
        let name = self.server_name(path)?;
        Ok(self.list(&name)?.contains(&name))
    }

    pub(crate) fn children(
        &mut self,
        path: &MailboxPath,
    ) -> Result<Vec<MailboxPath>, TransportError> {
        if !self.exists(path)? {
            return Err(TransportError::NoSuchFolder(path.clone()));
        }
        let name = self.server_name(path)?;
        let names = self.list(&format!("{name}{}%", self.delim()))?;
        let mut out = names
            .iter()
            .filter(|n| **n != name)
            .map(|n| self.path_from_server(n))
            .collect::<Result<Vec<_>, _>>()?;
        out.sort();
        Ok(out)
    }

    pub(crate) fn create(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        if self.exists(path)? {
            return Err(TransportError::AlreadyExists(path.clone()));
        }
        if let Some(parent) = path.parent() {
            if !self.exists(&parent)? {
                return Err(TransportError::NoParent(path.clone()));
            }
        }
        let name = self.server_name(path)?;
        self.run(&[Arg::Raw("CREATE "), Arg::Raw(&quote(&name))])?
            .ok("CREATE")
            .map(|_| ())
    }

    pub(crate) fn delete(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        if !self.children(path)?.is_empty() {
            return Err(TransportError::HasSubfolders(path.clone()));
        }
        let name = self.server_name(path)?;
        if self.selected.as_deref() == Some(name.as_str()) {
            self.run(&[Arg::Raw("CLOSE")])?;
            self.selected = None;
        }
        self.run(&[Arg::Raw("DELETE "), Arg::Raw(&quote(&name))])?
            .ok("DELETE")
            .map(|_| ())
    }

    /// Selects `path` and returns its message count.
    pub(crate) fn select(&mut self, path: &MailboxPath) -> Result<u64, TransportError> {
        let name = self.server_name(path)?;
        let done = self.run(&[Arg::Raw("SELECT "), Arg::Raw(&quote(&name))])?;
        if done.status != Status::Ok {
            self.selected = None;
            return Err(TransportError::NoSuchFolder(path.clone()));
        }
        self.selected = Some(name);
        Ok(done
            .untagged
            .iter()
            .find_map(|u| match u.as_slice() {
                [Token::Atom(n), t] if t.is_atom("EXISTS") => n.parse().ok(),
                _ => None,
            })
            .unwrap_or(0))
    }

    fn ensure_selected(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        let name = self.server_name(path)?;
        if self.selected.as_deref() != Some(name.as_str()) {
            self.select(path)?;
        }
        Ok(())
    }

    fn fetch(&mut self, set: &str, items: &str) -> Result<Vec<FetchItem>, TransportError> {
        let done = self
            .run(&[Arg::Raw(&format!("UID FETCH {set} {items}"))])?
            .ok("FETCH")?;
        Ok(done
            .untagged
            .iter()
            .filter_map(|u| parse_fetch(u))
            .collect())
    }

    fn uid_exists(&mut self, handle: &MessageHandle) -> Result<bool, TransportError> {
        self.ensure_selected(&handle.mailbox)?;
        Ok(self
            .fetch(&handle.uid.to_string(), "(UID)")?
            .iter()
            .any(|f| f.uid == Some(handle.uid)))
    }

    pub(crate) fn list_messages(
        &mut self,
        path: &MailboxPath,
    ) -> Result<Vec<ListedMessage>, TransportError> {
        let count = self.select(path)?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let items = self.fetch("1:*", "(UID RFC822.SIZE BODY.PEEK[HEADER])")?;
        let mut out: Vec<ListedMessage> = items
            .into_iter()
            .filter_map(|f| {
                let uid = f.uid?;
                let summary = f.header.as_deref().and_then(|h| {
                    let headers = parse_headers(split_message(h).0).ok()?;
                    let body = f.size?.checked_sub(h.len() as u64)?;
                    Some(HeaderSummary {
                        headers,
                        payload_octets: payload_len_from_wrapped(body as usize) as u64,
                    })
                });
                Some(ListedMessage {
                    handle: MessageHandle {
                        mailbox: path.clone(),
                        uid,
                    },
                    summary,
                })
            })
            .collect();
        out.sort_by_key(|m| m.handle.uid);
        Ok(out)
    }

    pub(crate) fn fetch_raw(&mut self, handle: &MessageHandle) -> Result<String, TransportError> {
        self.ensure_selected(&handle.mailbox)?;
        let items = self.fetch(&handle.uid.to_string(), "(UID BODY.PEEK[])")?;
        let body = items
            .into_iter()
            .find(|f| f.uid == Some(handle.uid))
            .and_then(|f| f.full)
            .ok_or_else(|| TransportError::NoSuchMessage(handle.clone()))?;
        Ok(body)
    }

    /// Uid of the newest message in `path`; used when the server does not
    /// report COPYUID/APPENDUID.
    fn newest_uid(&mut self, path: &MailboxPath) -> Result<u64, TransportError> {
        self.select(path)?;
        let done = self.run(&[Arg::Raw("UID SEARCH ALL")])?.ok("SEARCH")?;
        done.untagged
            .iter()
            .filter(|u| u.first().is_some_and(|t| t.is_atom("SEARCH")))
            .flat_map(|u| {
                u.iter()
                    .skip(1)
                    .filter_map(|t| t.as_string()?.parse::<u64>().ok())
            })
            .max()
            .ok_or_else(|| TransportError::Protocol(format!("{path} is empty after store")))
    }

    pub(crate) fn move_message(
        &mut self,
        handle: &MessageHandle,
        dest: &MailboxPath,
    ) -> Result<MessageHandle, TransportError> {
        if !self.exists(dest)? {
            return Err(TransportError::NoSuchFolder(dest.clone()));
        }
        if !self.uid_exists(handle)? {
            return Err(TransportError::NoSuchMessage(handle.clone()));
        }
        let dest_name = quote(&self.server_name(dest)?);
        let done = if self.has_capability("MOVE") {
            self.run(&[Arg::Raw(&format!("UID MOVE {} {dest_name}", handle.uid))])?
                .ok("MOVE")?
        } else {
            let done = self
                .run(&[Arg::Raw(&format!("UID COPY {} {dest_name}", handle.uid))])?
                .ok("COPY")?;
            self.expunge_uid(handle.uid)?;
            done
        };
        let uid = match done.response_code("COPYUID") {
            Some(args) if args.len() == 3 => args[2]
                .parse()
                .map_err(|_| TransportError::Protocol(format!("bad COPYUID {args:?}")))?,
            _ => self.newest_uid(dest)?,
        };
        Ok(MessageHandle {
            mailbox: dest.clone(),
            uid,
        })
    }

    fn expunge_uid(&mut self, uid: u64) -> Result<(), TransportError> {
        self.run(&[Arg::Raw(&format!(
            "UID STORE {uid} +FLAGS.SILENT (\\Deleted)"
        ))])?
        .ok("STORE")?;
        if self.has_capability("UIDPLUS") {
            self.run(&[Arg::Raw(&format!("UID EXPUNGE {uid}"))])?
                .ok("EXPUNGE")?;
        } else {
            self.run(&[Arg::Raw("EXPUNGE")])?.ok("EXPUNGE")?;
        }
        Ok(())
    }

    pub(crate) fn delete_message(&mut self, handle: &MessageHandle) -> Result<(), TransportError> {
        if !self.uid_exists(handle)? {
            return Err(TransportError::NoSuchMessage(handle.clone()));
        }
        self.expunge_uid(handle.uid)
    }

    pub(crate) fn append(
        &mut self,
        path: &MailboxPath,
        wire: &str,
        payload: u64,
        limit: u64,
    ) -> Result<MessageHandle, TransportError> {
        if !self.exists(path)? {
            return Err(TransportError::NoSuchFolder(path.clone()));
        }
        let name = quote(&self.server_name(path)?);
        let done = self.run(&[
            Arg::Raw(&format!("APPEND {name} ")),
            Arg::Literal(wire.as_bytes()),
        ])?;
        if done.status != Status::Ok {
            let text = done.text.to_ascii_uppercase();
            if text.contains("TOOBIG") || text.contains("TOO LARGE") || text.contains("SIZE") {
                return Err(TransportError::MessageTooLarge { payload, limit });
            }
            return Err(TransportError::Protocol(format!("APPEND: {}", done.text)));
        }
        let uid = match done.response_code("APPENDUID") {
            Some(args) if args.len() == 2 => args[1]
                .parse()
                .map_err(|_| TransportError::Protocol(format!("bad APPENDUID {args:?}")))?,
            _ => self.newest_uid(path)?,
        };
        Ok(MessageHandle {
            mailbox: path.clone(),
            uid,
        })
    }

    pub(crate) fn logout(&mut self) -> Result<(), TransportError> {
        self.run(&[Arg::Raw("LOGOUT")]).map(|_| ())
    }
}

/// `LIST (flags) delim name` → (delimiter, name).
fn list_entry(tokens: &[Token]) -> Option<(Option<char>, String)> {
    if !tokens.first()?.is_atom("LIST") {
        return None;
    }
    let close = matching_close(tokens, 1)?;
    let delim = match tokens.get(close + 1)? {
        Token::Quoted(d) => d.chars().next(),
        _ => None,
    };
    let name = tokens.get(close + 2)?.as_string()?;
    Some((delim, name))
}

#[derive(Debug, Default)]
struct FetchItem {
    uid: Option<u64>,
    size: Option<u64>,
    header: Option<String>,
    full: Option<String>,
}

/// `n FETCH (key value ...)`.
fn parse_fetch(tokens: &[Token]) -> Option<FetchItem> {
    if !tokens.get(1)?.is_atom("FETCH") || tokens.get(2)? != &Token::Open {
        return None;
    }
    let close = matching_close(tokens, 2)?;
    let mut item = FetchItem::default();
    let mut i = 3;
    while i < close {
        let key = match &tokens[i] {
            Token::Atom(a) => a.to_ascii_uppercase(),
            _ => return None,
        };
        let value = tokens.get(i + 1)?;
        let next = if *value == Token::Open {
            matching_close(tokens, i + 1)? + 1
        } else {
            i + 2
        };
        match key.as_str() {
            "UID" => item.uid = value.as_string()?.parse().ok(),
            "RFC822.SIZE" => item.size = value.as_string()?.parse().ok(),
            "BODY[HEADER]" => item.header = value.as_string(),
            "BODY[]" => item.full = value.as_string(),
            _ => {}
        }
        i = next;
    }
    Some(item)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_list_entries() {
        let t = tokenize(&[Part::Text(r#"LIST (\HasNoChildren) "/" "EMFS/a b""#.into())]).unwrap();
        assert_eq!(list_entry(&t), Some((Some('/'), "EMFS/a b".into())));
        let nil = tokenize(&[Part::Text(r#"LIST (\Noselect) NIL "" "#.into())]).unwrap();
        assert_eq!(list_entry(&nil), Some((None, String::new())));
    }

    #[test]
    fn parses_fetch_items() {
        let t = tokenize(&[
            Part::Text("3 FETCH (UID 12 RFC822.SIZE 99 FLAGS (\\Seen) BODY[HEADER] ".into()),
            Part::Literal(b"Subject: x\r\n\r\n".to_vec()),
            Part::Text(")".into()),
        ])
        .unwrap();
        let f = parse_fetch(&t).unwrap();
        assert_eq!(f.uid, Some(12));
        assert_eq!(f.size, Some(99));
        assert_eq!(f.header.as_deref(), Some("Subject: x\r\n\r\n"));
    }
}
