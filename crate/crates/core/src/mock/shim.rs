//! Plain-text SMTP and IMAP listeners in front of a [`MockEsp`].
//!
//! Just enough of both protocols for [`crate::net::NetSession`] to run
//! against the mock over real sockets. STARTTLS is never offered.

use std::collections::BTreeSet;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use log::debug;

use super::MockEsp;
use crate::codec::split_message;
use crate::net::syntax::{literal_marker, parse_uid_set, quote, tokenize, Part, Token};
use crate::transport::{MailboxPath, MessageHandle, TransportError, INBOX};

/// Running listeners; dropping the handle stops accepting connections.
pub struct ShimHandle {
    pub smtp_addr: SocketAddr,
    pub imap_addr: SocketAddr,
    stop: Arc<AtomicBool>,
}

impl Drop for ShimHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loops
        let _ = TcpStream::connect(self.smtp_addr);
        let _ = TcpStream::connect(self.imap_addr);
    }
}

/// Starts SMTP and IMAP listeners on ephemeral localhost ports.
pub fn serve(esp: MockEsp) -> io::Result<ShimHandle> {
    let smtp = TcpListener::bind("127.0.0.1:0")?;
    let imap = TcpListener::bind("127.0.0.1:0")?;
    let handle = ShimHandle {
        smtp_addr: smtp.local_addr()?,
        imap_addr: imap.local_addr()?,
        stop: Arc::new(AtomicBool::new(false)),
    };
    spawn_acceptor(smtp, esp.clone(), handle.stop.clone(), serve_smtp);
    spawn_acceptor(imap, esp, handle.stop.clone(), serve_imap);
    Ok(handle)
}

fn spawn_acceptor(
    listener: TcpListener,
    esp: MockEsp,
    stop: Arc<AtomicBool>,
    serve: fn(MockEsp, TcpStream) -> io::Result<()>,
) {
    thread::spawn(move || {
        for stream in listener.incoming() {
            if stop.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = stream else { continue };
            let _ = stream.set_nodelay(true);
            let esp = esp.clone();
            thread::spawn(move || {
                if let Err(e) = serve(esp, stream) {
                    debug!("shim connection ended: {e}");
                }
            });
        }
    });
}

fn read_line(reader: &mut impl BufRead) -> io::Result<Option<String>> {
    let mut buf = Vec::new();
    if reader.read_until(b'\n', &mut buf)? == 0 {
        return Ok(None);
    }
    while matches!(buf.last(), Some(b'\n' | b'\r')) {
        buf.pop();
    }
    Ok(Some(String::from_utf8_lossy(&buf).into_owned()))
}

fn serve_smtp(esp: MockEsp, stream: TcpStream) -> io::Result<()> {
    let mut out = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut authed = false;
    let reply = |out: &mut TcpStream, s: &str| out.write_all(format!("{s}\r\n").as_bytes());
    reply(&mut out, "220 mock ESMTP ready")?;
    while let Some(line) = read_line(&mut reader)? {
        let upper = line.to_ascii_uppercase();
        let verb = upper.split_whitespace().next().unwrap_or("");
        match verb {
            "EHLO" => {
                reply(&mut out, "250-mock")?;
                reply(&mut out, "250 AUTH PLAIN")?;
            }
            "HELO" | "NOOP" | "RSET" => reply(&mut out, "250 ok")?,
            "STARTTLS" => reply(&mut out, "454 TLS not available")?,
            "AUTH" => {
                let token = line.split_whitespace().nth(2).unwrap_or("");
                let decoded = STANDARD.decode(token).unwrap_or_default();
                let mut fields = decoded.split(|b| *b == 0).skip(1);
                let user = String::from_utf8_lossy(fields.next().unwrap_or(b"")).into_owned();
                let pass = String::from_utf8_lossy(fields.next().unwrap_or(b"")).into_owned();
                if esp.login(&user, &pass, false).is_ok() {
                    authed = true;
                    reply(&mut out, "235 authenticated")?;
                } else {
                    reply(&mut out, "535 authentication failed")?;
                }
            }
            "MAIL" | "RCPT" if !authed => reply(&mut out, "530 authentication required")?,
            "MAIL" | "RCPT" => reply(&mut out, "250 ok")?,
            "DATA" if !authed => reply(&mut out, "530 authentication required")?,
            "DATA" => {
                reply(&mut out, "354 End data with <CR><LF>.<CR><LF>")?;
                let mut wire = String::new();
                loop {
                    let Some(l) = read_line(&mut reader)? else {
                        return Ok(());
                    };
                    if l == "." {
                        break;
                    }
                    wire.push_str(l.strip_prefix('.').unwrap_or(&l));
                    wire.push_str("\r\n");
                }
                match esp.submit(&wire) {
                    Ok(_) => reply(&mut out, "250 ok: queued")?,
                    Err(TransportError::MessageTooLarge { .. }) => {
                        reply(&mut out, "552 message size exceeds fixed limit")?
                    }
                    Err(e) => reply(&mut out, &format!("451 {e}"))?,
                }
            }
            "QUIT" => {
                reply(&mut out, "221 bye")?;
                return Ok(());
            }
            _ => reply(&mut out, "502 command not implemented")?,
        }
    }
    Ok(())
}

struct ImapState {
    esp: MockEsp,
    authed: bool,
    selected: Option<MailboxPath>,
    deleted: BTreeSet<u64>,
}

/// `*` matches anything, `%` anything but the delimiter.
fn wildcard_match(pattern: &[u8], name: &[u8]) -> bool {
    match pattern.split_first() {
        None => name.is_empty(),
        Some((b'*', rest)) => (0..=name.len()).any(|i| wildcard_match(rest, &name[i..])),
        Some((b'%', rest)) => (0..=name.len())
            .take_while(|&i| i == 0 || name[i - 1] != b'/')
            .any(|i| wildcard_match(rest, &name[i..])),
        Some((c, rest)) => name.first() == Some(c) && wildcard_match(rest, &name[1..]),
    }
}

fn folder_path(name: &str) -> Option<MailboxPath> {
    if name.eq_ignore_ascii_case(INBOX) {
        Some(MailboxPath::inbox())
    } else {
        name.parse().ok()
    }
}

fn serve_imap(esp: MockEsp, stream: TcpStream) -> io::Result<()> {
    let mut out = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut st = ImapState {
        esp,
        authed: false,
        selected: None,
        deleted: BTreeSet::new(),
    };
    out.write_all(b"* OK mock IMAP4rev1 ready\r\n")?;
    loop {
        let mut parts = Vec::new();
        loop {
            let Some(line) = read_line(&mut reader)? else {
                return Ok(());
            };
            match literal_marker(&line) {
                Some((text, n)) => {
                    if !line.ends_with("+}") {
                        out.write_all(b"+ go ahead\r\n")?;
                    }
                    let mut lit = vec![0; n];
                    reader.read_exact(&mut lit)?;
                    parts.push(Part::Text(text.to_owned()));
                    parts.push(Part::Literal(lit));
                }
                None => {
                    parts.push(Part::Text(line));
                    break;
                }
            }
        }
        let Ok(tokens) = tokenize(&parts) else {
            out.write_all(b"* BAD unparsable command\r\n")?;
            continue;
        };
        let Some(tag) = tokens.first().and_then(Token::as_string) else {
            continue;
        };
        let (response, close) = imap_command(&mut st, &tokens[1..]);
        out.write_all(response.untagged.as_bytes())?;
        out.write_all(format!("{tag} {}\r\n", response.status).as_bytes())?;
        if close {
            return Ok(());
        }
    }
}

#[derive(Default)]
struct Reply {
    untagged: String,
    status: String,
}

impl Reply {
    fn ok(text: &str) -> Self {
        Self {
            untagged: String::new(),
            status: format!("OK {text}"),
        }
    }

    fn no(text: impl std::fmt::Display) -> Self {
        Self {
            untagged: String::new(),
            status: format!("NO {text}"),
        }
    }

    fn bad(text: &str) -> Self {
        Self {
            untagged: String::new(),
            status: format!("BAD {text}"),
        }
    }
}

fn imap_command(st: &mut ImapState, tokens: &[Token]) -> (Reply, bool) {
    let word = |i: usize| tokens.get(i).and_then(Token::as_string).unwrap_or_default();
    let command = word(0).to_ascii_uppercase();
    match command.as_str() {
        "CAPABILITY" => {
            let mut r = Reply::ok("done");
            r.untagged = "* CAPABILITY IMAP4rev1 MOVE UIDPLUS\r\n".into();
            return (r, false);
        }
        "NOOP" => return (Reply::ok("done"), false),
        "STARTTLS" => return (Reply::bad("TLS not available"), false),
        "LOGOUT" => {
            let mut r = Reply::ok("bye");
            r.untagged = "* BYE logging out\r\n".into();
            return (r, true);
        }
        "LOGIN" => {
            return match st.esp.login(&word(1), &word(2), false) {
                Ok(_) => {
                    st.authed = true;
                    (Reply::ok("logged in"), false)
                }
                Err(_) => (
                    Reply::no("[AUTHENTICATIONFAILED] invalid credentials"),
                    false,
                ),
            };
        }
        _ if !st.authed => return (Reply::no("not authenticated"), false),
        _ => {}
    }
    let reply = match command.as_str() {
        "LIST" => {
            let pattern = word(2);
            let mut r = Reply::ok("done");
            if pattern.is_empty() {
                r.untagged = "* LIST (\\Noselect) \"/\" \"\"\r\n".into();
            } else {
                for name in st.esp.account().folder_names() {
                    if wildcard_match(pattern.as_bytes(), name.as_bytes()) {
                        r.untagged
                            .push_str(&format!("* LIST () \"/\" {}\r\n", quote(name)));
                    }
                }
            }
            r
        }
        "CREATE" | "DELETE" | "SELECT" | "EXAMINE" => {
            let Some(path) = folder_path(&word(1)) else {
                return (Reply::no("bad mailbox name"), false);
            };
            let result = match command.as_str() {
                "CREATE" => st.esp.create_folder(&path),
                "DELETE" => st.esp.delete_folder(&path),
                _ => st.esp.select_folder(&path),
            };
            match result {
                Err(e) => Reply::no(e),
                Ok(()) if command == "SELECT" || command == "EXAMINE" => {
                    let count = st
                        .esp
                        .account()
                        .messages(&path.join('/'))
                        .map_or(0, <[_]>::len);
                    st.selected = Some(path);
                    st.deleted.clear();
                    let mut r = Reply::ok("[READ-WRITE] selected");
                    r.untagged = format!("* {count} EXISTS\r\n* OK [UIDVALIDITY 1] ok\r\n");
                    r
                }
                Ok(()) => Reply::ok("done"),
            }
        }
        "CLOSE" => {
            expunge(st, None);
            st.selected = None;
            Reply::ok("closed")
        }
        "EXPUNGE" => expunge(st, None),
        "APPEND" => {
            let Some(path) = folder_path(&word(1)) else {
                return (Reply::no("bad mailbox name"), false);
            };
            let Some(Token::Literal(data)) = tokens.last() else {
                return (Reply::bad("APPEND needs a literal"), false);
            };
            match st.esp.append(&path, &String::from_utf8_lossy(data)) {
                Ok(h) => Reply::ok(&format!("[APPENDUID 1 {}] appended", h.uid)),
                Err(TransportError::MessageTooLarge { .. }) => {
                    Reply::no("[TOOBIG] message too large")
                }
                Err(e) => Reply::no(e),
            }
        }
        "UID" => uid_command(st, &tokens[1..]),
        _ => Reply::bad("unknown command"),
    };
    (reply, false)
}

fn selected_messages(st: &ImapState) -> Vec<(u64, String)> {
    let Some(path) = &st.selected else {
        return Vec::new();
    };
    let key = if path.is_inbox() {
        INBOX.to_owned()
    } else {
        path.join('/')
    };
    st.esp
        .account()
        .messages(&key)
        .unwrap_or_default()
        .iter()
        .map(|m| (m.uid, m.wire.clone()))
        .collect()
}

fn uids_in(set: &str, messages: &[(u64, String)]) -> Vec<u64> {
    let max = messages.iter().map(|m| m.0).max().unwrap_or(0);
    let ranges = parse_uid_set(set, max).unwrap_or_default();
    messages
        .iter()
        .map(|m| m.0)
        .filter(|uid| ranges.iter().any(|(a, b)| (a..=b).contains(&uid)))
        .collect()
}

fn expunge(st: &mut ImapState, only: Option<&[u64]>) -> Reply {
    let Some(path) = st.selected.clone() else {
        return Reply::no("no mailbox selected");
    };
    let mut r = Reply::ok("expunged");
    let targets: Vec<u64> = st
        .deleted
        .iter()
        .copied()
        .filter(|u| only.is_none_or(|o| o.contains(u)))
        .collect();
    for uid in targets {
        let seq = selected_messages(st).iter().position(|m| m.0 == uid);
        let handle = MessageHandle {
            mailbox: path.clone(),
            uid,
        };
        if st.esp.expunge(&handle).is_ok() {
            if let Some(seq) = seq {
                r.untagged.push_str(&format!("* {} EXPUNGE\r\n", seq + 1));
            }
        }
        st.deleted.remove(&uid);
    }
    r
}

fn uid_command(st: &mut ImapState, tokens: &[Token]) -> Reply {
    let word = |i: usize| tokens.get(i).and_then(Token::as_string).unwrap_or_default();
    if st.selected.is_none() {
        return Reply::no("no mailbox selected");
    }
    let messages = selected_messages(st);
    let uids = uids_in(&word(1), &messages);
    match word(0).to_ascii_uppercase().as_str() {
        "FETCH" => {
            let items: Vec<String> = tokens[2..]
                .iter()
                .filter_map(Token::as_string)
                .map(|s| s.to_ascii_uppercase())
                .collect();
            let mut r = Reply::ok("fetched");
            for (seq, (uid, wire)) in messages.iter().enumerate() {
                if !uids.contains(uid) {
                    continue;
                }
                let mut line = format!("* {} FETCH (UID {uid}", seq + 1);
                for item in &items {
                    match item.as_str() {
                        "RFC822.SIZE" => line.push_str(&format!(" RFC822.SIZE {}", wire.len())),
                        "BODY.PEEK[HEADER]" | "BODY[HEADER]" => {
                            let header = &wire[..wire.len() - split_message(wire).1.len()];
                            line.push_str(&format!(
                                " BODY[HEADER] {{{}}}\r\n{header}",
                                header.len()
                            ));
                        }
                        "BODY.PEEK[]" | "BODY[]" => {
                            line.push_str(&format!(" BODY[] {{{}}}\r\n{wire}", wire.len()));
                        }
                        _ => {}
                    }
                }
                line.push_str(")\r\n");
                r.untagged.push_str(&line);
            }
            r
        }
        "STORE" => {
            if word(2).to_ascii_uppercase().starts_with("+FLAGS")
                && tokens[3..].iter().any(|t| t.is_atom("\\Deleted"))
            {
                st.deleted.extend(uids);
            }
            Reply::ok("stored")
        }
        "EXPUNGE" => expunge(st, Some(&uids)),
        "MOVE" => {
            let (Some(&uid), Some(dest)) = (uids.first(), folder_path(&word(2))) else {
                return Reply::no("nothing to move");
            };
            let handle = MessageHandle {
                mailbox: st.selected.clone().expect("checked"),
                uid,
            };
            match st.esp.move_message(&handle, &dest) {
                Ok(h) => Reply::ok(&format!("[COPYUID 1 {uid} {}] moved", h.uid)),
                Err(e) => Reply::no(e),
            }
        }
        "SEARCH" => {
            let mut r = Reply::ok("searched");
            let list: Vec<String> = messages.iter().map(|m| m.0.to_string()).collect();
            r.untagged = format!("* SEARCH {}\r\n", list.join(" "));
            r
        }
        _ => Reply::bad("unsupported UID command"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wildcards() {
        assert!(wildcard_match(b"EMFS/%", b"EMFS/a"));
        assert!(!wildcard_match(b"EMFS/%", b"EMFS/a/b"));
        assert!(wildcard_match(b"EMFS/*", b"EMFS/a/b"));
        assert!(wildcard_match(b"EMFS", b"EMFS"));
        assert!(!wildcard_match(b"EMFS", b"EMFS/a"));
    }
}
