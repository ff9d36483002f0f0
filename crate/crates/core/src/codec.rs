//! Message codec: turns file bytes into a chain of self-addressed email
//! messages and back.
//!
//! A file is encoded once with base-64, the encoded text is cut into slices
//! of at most `S` alphabet characters, and every slice becomes the body of
//! one message. Messages are linked by id-hashes: each message names the
//! id-hash of its successor in the `EMFS-Next` header, and the last one
//! carries the sentinel `-1`. Every message of a chain repeats the id-hash of
//! the first slice as the first token of its `Subject`.
//!
//! ```text
//! From: me@example.com
//! To: me@example.com
//! Subject: <first-id-hash> <filename>
//! EMFS-Filename: <filename>
//! EMFS-Next: <next-id-hash | -1>
//!
//! <base-64 slice, wrapped at 76 columns>
//! ```

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Column at which message bodies are wrapped on the wire.
pub const LINE_WIDTH: usize = 76;

/// Octets budgeted for the header block and framing of one message.
pub const FRAMING_ALLOWANCE: usize = 1024;

pub const HEADER_FILENAME: &str = "EMFS-Filename";
pub const HEADER_NEXT: &str = "EMFS-Next";

/// Header value marking the end of a chain.
pub const END_OF_CHAIN: &str = "-1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed encoding: {0}")]
    MalformedEncoding(String),
    #[error("not an EMFS message: missing {0} header")]
    NotAnEmfsMessage(&'static str),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("invalid filename {name:?}: {reason}")]
    InvalidFilename { name: String, reason: &'static str },
}

/// Base-64 text with line breaks removed.
///
/// Only the payload alphabet is stored, so `len()` is exactly the number of
/// octets that count toward a provider's size limit.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct EncodedText(String);

impl EncodedText {
    /// Accepts base-64 text, ignoring CR and LF.
    pub fn parse(text: &str) -> Result<Self, CodecError> {
        let mut out = String::with_capacity(text.len());
        for (pos, c) in text.char_indices() {
            match c {
                '\r' | '\n' => {}
                'A'..='Z' | 'a'..='z' | '0'..='9' | '+' | '/' | '=' => out.push(c),
                other => {
                    return Err(CodecError::MalformedEncoding(format!(
                        "illegal character {other:?} at offset {pos}"
                    )))
                }
            }
        }
        Ok(Self(out))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The text as it appears in a message body: CRLF after every line of at
    /// most [`LINE_WIDTH`] characters.
    pub fn wrapped(&self) -> String {
        let mut out = String::with_capacity(self.0.len() + 2 * self.0.len().div_ceil(LINE_WIDTH));
        // base-64 is ASCII, so byte chunks are char boundaries
        for line in self.0.as_bytes().chunks(LINE_WIDTH) {
            out.push_str(std::str::from_utf8(line).expect("ascii"));
            out.push_str("\r\n");
        }
        out
    }

    /// Joins slices back into one text.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a EncodedText>) -> EncodedText {
        EncodedText(parts.into_iter().map(|p| p.0.as_str()).collect())
    }
}

impl fmt::Display for EncodedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Encodes bytes into email-safe base-64 text.
pub fn encode8(data: &[u8]) -> EncodedText {
    EncodedText(STANDARD.encode(data))
}

/// Decodes base-64 text produced by [`encode8`], or the concatenation of a
/// chain's body slices.
pub fn decode8(text: &EncodedText) -> Result<Vec<u8>, CodecError> {
    STANDARD
        .decode(text.as_str())
        .map_err(|e| CodecError::MalformedEncoding(e.to_string()))
}

/// SHA-256 identifier of one chain link, as 64 lowercase hex digits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IdHash(String);

impl IdHash {
    pub const LEN: usize = 64;

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for IdHash {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == Self::LEN && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            Ok(Self(s.to_owned()))
        } else {
            Err(CodecError::MalformedHeader(format!(
                "not an id-hash: {s:?}"
            )))
        }
    }
}

impl fmt::Display for IdHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifies one slice of one file: SHA-256 over
/// `filename ‖ 0x00 ‖ decimal(index) ‖ 0x00 ‖ slice`.
pub fn hash_id(filename: &str, slice_index: usize, slice: &EncodedText) -> IdHash {
    let mut hasher = Sha256::new();
    hasher.update(filename.as_bytes());
    hasher.update([0u8]);
    hasher.update(slice_index.to_string().as_bytes());
    hasher.update([0u8]);
    hasher.update(slice.as_str().as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(IdHash::LEN);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    IdHash(hex)
}

/// Value of the `EMFS-Next` header.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NextId {
    Id(IdHash),
    End,
}

impl NextId {
    pub fn is_end(&self) -> bool {
        matches!(self, NextId::End)
    }
}

impl FromStr for NextId {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == END_OF_CHAIN {
            Ok(NextId::End)
        } else {
            s.parse().map(NextId::Id)
        }
    }
}

impl fmt::Display for NextId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NextId::Id(id) => id.fmt(f),
            NextId::End => f.write_str(END_OF_CHAIN),
        }
    }
}

/// Slices of one encoded file, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SliceList {
    slices: Vec<EncodedText>,
}

impl SliceList {
    pub fn as_slice(&self) -> &[EncodedText] {
        &self.slices
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EncodedText> {
        self.slices.iter()
    }

    pub fn joined(&self) -> EncodedText {
        EncodedText::concat(&self.slices)
    }
}

/// Number of messages needed for `encoded_len` octets of payload under
/// limit `limit`. Never less than one.
pub fn chain_length(encoded_len: usize, limit: usize) -> usize {
    assert!(limit >= 1, "size limit must be positive");
    encoded_len.div_ceil(limit).max(1)
}

/// Cuts encoded text into slices of `limit` octets; the last may be shorter.
/// Empty text yields a single empty slice.
pub fn slice_encoded(text: &EncodedText, limit: usize) -> SliceList {
    assert!(limit >= 1, "size limit must be positive");
    if text.is_empty() {
        return SliceList {
            slices: vec![EncodedText::default()],
        };
    }
    let slices = text
        .as_str()
        .as_bytes()
        .chunks(limit)
        .map(|c| EncodedText(std::str::from_utf8(c).expect("ascii").to_owned()))
        .collect();
    SliceList { slices }
}

/// Rejects names that cannot travel verbatim in a header or that would be
/// ambiguous as a path component.
pub fn validate_filename(name: &str) -> Result<(), CodecError> {
    let reason = if name.is_empty() {
        Some("empty")
    } else if name.chars().any(char::is_control) {
        Some("contains control characters")
    } else if name.contains('/') {
        Some("contains '/'")
    } else if name.trim() != name {
        Some("has leading or trailing whitespace")
    } else if name == "." || name == ".." {
        Some("reserved")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(CodecError::InvalidFilename {
            name: name.to_owned(),
            reason,
        }),
        None => Ok(()),
    }
}

/// One link of a file chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmfsMessage {
    pub from: String,
    pub to: String,
    /// Id-hash of the chain's first slice, repeated in every subject.
    pub first_id: IdHash,
    pub filename: String,
    pub next_id: NextId,
    pub body: EncodedText,
}

impl EmfsMessage {
    pub fn subject(&self) -> String {
        format!("{} {}", self.first_id, self.filename)
    }

    /// Header block including the terminating blank line.
    pub fn header_block(&self) -> String {
        format!(
            "From: {}\r\nTo: {}\r\nSubject: {}\r\n{HEADER_FILENAME}: {}\r\n{HEADER_NEXT}: {}\r\n\r\n",
            self.from,
            self.to,
            self.subject(),
            self.filename,
            self.next_id
        )
    }

    /// Wire form with CRLF line endings.
    pub fn to_wire(&self) -> String {
        let mut wire = self.header_block();
        wire.push_str(&self.body.wrapped());
        wire
    }
}

/// Builds the chain for `filename`: message `i` carries slice `i` and links
/// to the id-hash of slice `i + 1`; the last links to `-1`.
pub fn pack(filename: &str, slices: &SliceList, self_address: &str) -> Vec<EmfsMessage> {
    assert!(!slices.is_empty(), "a chain has at least one slice");
    let ids: Vec<IdHash> = slices
        .iter()
        .enumerate()
        .map(|(i, s)| hash_id(filename, i, s))
        .collect();
    let first_id = ids[0].clone();
    slices
        .iter()
        .enumerate()
        .map(|(i, slice)| EmfsMessage {
            from: self_address.to_owned(),
            to: self_address.to_owned(),
            first_id: first_id.clone(),
            filename: filename.to_owned(),
            next_id: ids.get(i + 1).cloned().map_or(NextId::End, NextId::Id),
            body: slice.clone(),
        })
        .collect()
}

/// Chain-relevant header fields of a message, read without its body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainHeaders {
    pub from: String,
    pub to: String,
    pub first_id: IdHash,
    pub filename: String,
    pub next_id: NextId,
}

/// Unfolded `(name, value)` pairs of an RFC 822 header block.
fn header_fields(block: &str) -> Vec<(String, String)> {
    let mut fields: Vec<(String, String)> = Vec::new();
    for line in block.split('\n') {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        if line.starts_with([' ', '\t']) {
            if let Some((_, value)) = fields.last_mut() {
                value.push_str(line);
            }
            continue;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.strip_prefix(' ').unwrap_or(value);
            fields.push((name.trim().to_owned(), value.to_owned()));
        }
    }
    fields
}

/// Splits raw message text at the first blank line into header block and
/// body.
pub fn split_message(raw: &str) -> (&str, &str) {
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if line == "\r\n" || line == "\n" {
            return (&raw[..offset], &raw[offset + line.len()..]);
        }
        offset += line.len();
    }
    (raw, "")
}

/// Reads the chain headers from a header block (the body, if present, is
/// ignored).
pub fn parse_headers(header: &str) -> Result<ChainHeaders, CodecError> {
    let fields = header_fields(header);
    let get = |name: &str| {
        fields
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.trim_end().to_owned())
    };
    let filename = get(HEADER_FILENAME).ok_or(CodecError::NotAnEmfsMessage(HEADER_FILENAME))?;
    let next = get(HEADER_NEXT).ok_or(CodecError::NotAnEmfsMessage(HEADER_NEXT))?;
    let next_id: NextId = next.trim().parse()?;
    let subject =
        get("Subject").ok_or_else(|| CodecError::MalformedHeader("missing Subject".into()))?;
    let (token, subject_name) = subject.split_once(' ').ok_or_else(|| {
        CodecError::MalformedHeader(format!("subject lacks a hash token: {subject:?}"))
    })?;
    let first_id: IdHash = token.parse()?;
    if subject_name != filename {
        return Err(CodecError::MalformedHeader(format!(
            "subject names {subject_name:?} but {HEADER_FILENAME} is {filename:?}"
        )));
    }
    Ok(ChainHeaders {
        from: get("From").unwrap_or_default(),
        to: get("To").unwrap_or_default(),
        first_id,
        filename,
        next_id,
    })
}

/// Parses a full message in wire form.
pub fn parse_message(raw: &str) -> Result<EmfsMessage, CodecError> {
    let (header, body) = split_message(raw);
    let h = parse_headers(header)?;
    Ok(EmfsMessage {
        from: h.from,
        to: h.to,
        first_id: h.first_id,
        filename: h.filename,
        next_id: h.next_id,
        body: EncodedText::parse(body)?,
    })
}

/// Body payload octets of a message in wire form: everything after the
/// header block except CR and LF.
pub fn payload_octets(wire: &str) -> u64 {
    let (_, body) = split_message(wire);
    (body.len() - body.matches('\r').count() - body.matches('\n').count()) as u64
}

/// Payload octets of a body that was wrapped by [`EncodedText::wrapped`],
/// recovered from the total body length alone: every full line occupies
/// `LINE_WIDTH + 2` octets on the wire.
pub fn payload_len_from_wrapped(body_octets: usize) -> usize {
    body_octets - 2 * body_octets.div_ceil(LINE_WIDTH + 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn text(s: &str) -> EncodedText {
        EncodedText::parse(s).unwrap()
    }

    #[test]
    fn encode8_empty_is_empty() {
        assert!(encode8(b"").is_empty());
        assert_eq!(decode8(&EncodedText::default()).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn encode8_matches_reference_base64() {
        // python3: base64.b64encode(b'Hello, World!')
        assert_eq!(encode8(b"Hello, World!").as_str(), "SGVsbG8sIFdvcmxkIQ==");
    }

    #[test]
    fn decode8_rejects_illegal_characters() {
        assert!(matches!(
            EncodedText::parse("SGVs*bG8="),
            Err(CodecError::MalformedEncoding(_))
        ));
        // alphabet-clean but bad padding
        assert!(matches!(
            decode8(&text("SGVsbG8=A")),
            Err(CodecError::MalformedEncoding(_))
        ));
    }

    #[test]
    fn decode8_of_three_joined_slices() {
        let data: Vec<u8> = (0..=255u8).cycle().take(1000).collect();
        let slices = slice_encoded(&encode8(&data), 500);
        assert_eq!(slices.len(), 3);
        assert_eq!(decode8(&slices.joined()).unwrap(), data);
    }

    #[test]
    fn hash_id_reference_values() {
        // python3: hashlib.sha256(b'f\x000\x00').hexdigest()
        assert_eq!(
            hash_id("f", 0, &EncodedText::default()).as_str(),
            "0277e22e7ddf8aaf334757890a25e4a738f9ea3e0d00a094c06615098fb28ec8"
        );
        let slice = text("SGVsbG8=");
        assert_eq!(
            hash_id("a.txt", 0, &slice).as_str(),
            "e587e3bc6fd4e5977a6853a03a7a1665a1f2a2c6ac671872ed15a91c4c89b431"
        );
        assert_eq!(
            hash_id("a.txt", 1, &slice).as_str(),
            "1971889fa68d75628a49ca448f07926caec17518edab6e6a4da3576b89e42123"
        );
        assert_eq!(hash_id("a.txt", 1, &slice), hash_id("a.txt", 1, &slice));
    }

    #[test]
    fn slicing_boundaries() {
        let s = 10;
        assert_eq!(slice_encoded(&text(&"A".repeat(2 * s + 1)), s).len(), 3);
        assert_eq!(slice_encoded(&text(&"A".repeat(s)), s).len(), 1);
        let empty = slice_encoded(&EncodedText::default(), s);
        assert_eq!(empty.len(), 1);
        assert!(empty.as_slice()[0].is_empty());
    }

    #[test]
    fn single_slice_chain_points_at_itself_and_ends() {
        let slices = slice_encoded(&encode8(b"x"), 64);
        let msgs = pack("x.bin", &slices, "me@example.com");
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].next_id, NextId::End);
        assert_eq!(msgs[0].first_id, hash_id("x.bin", 0, &slices.as_slice()[0]));
        assert!(msgs[0].subject().starts_with(msgs[0].first_id.as_str()));
        assert_eq!(msgs[0].from, msgs[0].to);
    }

    #[test]
    fn three_slices_make_one_linked_chain() {
        let slices = slice_encoded(&text(&"QUJD".repeat(6)), 8);
        let msgs = pack("hello.mp4", &slices, "me@example.com");
        assert_eq!(msgs.len(), 3);
        for (i, m) in msgs.iter().take(2).enumerate() {
            assert_eq!(
                m.next_id,
                NextId::Id(hash_id("hello.mp4", i + 1, &slices.as_slice()[i + 1]))
            );
        }
        assert!(msgs[2].next_id.is_end());
        assert!(msgs.iter().all(|m| m.first_id == msgs[0].first_id));
    }

    #[test]
    fn wire_format_is_exact() {
        let slices = slice_encoded(&encode8(b"Hello, World!"), 100);
        let msg = &pack("a b.txt", &slices, "me@example.com")[0];
        let id = hash_id("a b.txt", 0, &slices.as_slice()[0]);
        let expected = format!(
            "From: me@example.com\r\nTo: me@example.com\r\nSubject: {id} a b.txt\r\n\
             EMFS-Filename: a b.txt\r\nEMFS-Next: -1\r\n\r\nSGVsbG8sIFdvcmxkIQ==\r\n"
        );
        assert_eq!(msg.to_wire(), expected);
    }

    #[test]
    fn body_wraps_at_76_columns() {
        let t = text(&"A".repeat(160));
        let wrapped = t.wrapped();
        let lines: Vec<&str> = wrapped.split("\r\n").collect();
        assert_eq!(
            lines.iter().map(|l| l.len()).collect::<Vec<_>>(),
            vec![76, 76, 8, 0]
        );
    }

    #[test]
    fn parse_splits_subject_at_first_space() {
        let id = hash_id("my file.txt", 0, &EncodedText::default());
        let raw = format!(
            "Received: by mx\r\nSubject: {id} my file.txt\r\nEMFS-Filename: my file.txt\r\nEMFS-Next: -1\r\n\r\n"
        );
        let msg = parse_message(&raw).unwrap();
        assert_eq!(msg.filename, "my file.txt");
        assert_eq!(msg.first_id, id);
        assert!(msg.body.is_empty());
    }

    #[test]
    fn parse_rejects_non_emfs_and_bad_subjects() {
        let no_next = "Subject: x y\r\nEMFS-Filename: y\r\n\r\nQQ==\r\n";
        assert_eq!(
            parse_message(no_next),
            Err(CodecError::NotAnEmfsMessage(HEADER_NEXT))
        );
        let no_token = "Subject: y\r\nEMFS-Filename: y\r\nEMFS-Next: -1\r\n\r\n";
        assert!(matches!(
            parse_message(no_token),
            Err(CodecError::MalformedHeader(_))
        ));
        let bad_token = "Subject: 1234 y\r\nEMFS-Filename: y\r\nEMFS-Next: -1\r\n\r\n";
        assert!(matches!(
            parse_message(bad_token),
            Err(CodecError::MalformedHeader(_))
        ));
    }

    #[test]
    fn parse_unfolds_and_accepts_bare_lf() {
        let id = hash_id("f", 0, &EncodedText::default());
        let raw = format!("Subject: {id}\n f\nEMFS-Filename: f\nEMFS-Next: -1\n\n");
        // folding keeps the whitespace, so the subject still reads "<id> f"
        assert_eq!(parse_message(&raw).unwrap().filename, "f");
    }

    #[test]
    fn payload_length_recovered_from_wrapped_body() {
        for n in [0usize, 1, 75, 76, 77, 151, 152, 153, 1000] {
            let t = text(&"A".repeat(n));
            assert_eq!(payload_len_from_wrapped(t.wrapped().len()), n, "n = {n}");
        }
    }

    #[test]
    fn filename_validation() {
        assert!(validate_filename("hello.mp4").is_ok());
        assert!(validate_filename("my file.txt").is_ok());
        for bad in ["", "a/b", " x", "x ", "a\r\nBcc: y", ".", ".."] {
            assert!(validate_filename(bad).is_err(), "{bad:?}");
        }
    }
}
