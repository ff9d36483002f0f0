//! Text dump of a mock account.
//!
//! ```text
//! emfs-mock-snapshot 1
//! account me@example.com
//! password secret
//! size-limit 1024
//! tls on
//! next-uid 4
//! folder EMFS
//! message 3
//! > From: me@example.com
//! > ...
//! folder INBOX
//! ```
//!
//! Message wire text is split on CRLF; each piece becomes one `> ` line with
//! `\`, CR and LF escaped.

use std::collections::BTreeMap;

use super::{MockAccount, MockError, StoredMessage};
use crate::transport::INBOX;

const MAGIC: &str = "emfs-mock-snapshot 1";

fn escape(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    for c in line.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\r' => out.push_str("\\r"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(line: &str) -> Option<String> {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next()? {
                '\\' => out.push('\\'),
                'r' => out.push('\r'),
                'n' => out.push('\n'),
                _ => return None,
            }
        } else {
            out.push(c);
        }
    }
    Some(out)
}

pub(super) fn render(account: &MockAccount) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("account {}\n", account.address));
    out.push_str(&format!("password {}\n", account.password));
    out.push_str(&format!("size-limit {}\n", account.size_limit_s));
    out.push_str(&format!(
        "tls {}\n",
        if account.tls_enabled { "on" } else { "off" }
    ));
    out.push_str(&format!("next-uid {}\n", account.next_uid));
    for (name, messages) in &account.folders {
        out.push_str(&format!("folder {name}\n"));
        for m in messages {
            out.push_str(&format!("message {}\n", m.uid));
            for line in m.wire.split("\r\n") {
                out.push_str("> ");
                out.push_str(&escape(line));
                out.push('\n');
            }
        }
    }
    out
}

pub(super) fn parse(text: &str) -> Result<MockAccount, MockError> {
    let bad = |line: usize, reason: &str| MockError::BadSnapshot {
        line,
        reason: reason.to_owned(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(bad(1, "missing snapshot header")),
    }
    let mut field = |key: &str| -> Result<(usize, String), MockError> {
        let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated snapshot"))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(|v| (n, v.to_owned()))
            .ok_or_else(|| bad(n, &format!("expected `{key}`")))
    };
    let (_, address) = field("account")?;
    let (_, password) = field("password")?;
    let (n, limit) = field("size-limit")?;
    let size_limit_s: u64 = limit.parse().map_err(|_| bad(n, "bad size limit"))?;
    let (n, tls) = field("tls")?;
    let tls_enabled = match tls.as_str() {
        "on" => true,
        "off" => false,
        _ => return Err(bad(n, "tls must be on or off")),
    };
    let (n, next) = field("next-uid")?;
    let next_uid: u64 = next.parse().map_err(|_| bad(n, "bad next-uid"))?;

    let mut account = MockAccount::new(address, password, size_limit_s, tls_enabled)?;
    account.next_uid = next_uid;
    let mut folders: BTreeMap<String, Vec<StoredMessage>> = BTreeMap::new();
    let mut current: Option<String> = None;
    while let Some((n, line)) = lines.next() {
        if let Some(name) = line.strip_prefix("folder ") {
            if folders.insert(name.to_owned(), Vec::new()).is_some() {
                return Err(bad(n, "duplicate folder"));
            }
            current = Some(name.to_owned());
        } else if let Some(uid) = line.strip_prefix("message ") {
            let uid: u64 = uid.parse().map_err(|_| bad(n, "bad uid"))?;
            if uid >= next_uid {
                return Err(bad(n, "uid not below next-uid"));
            }
            let folder = current
                .as_ref()
                .ok_or_else(|| bad(n, "message outside folder"))?;
            let mut parts = Vec::new();
            while let Some((m, l)) = lines.next_if(|(_, l)| l.starts_with("> ") || *l == ">") {
                let raw = l.strip_prefix("> ").unwrap_or("");
                parts.push(unescape(raw).ok_or_else(|| bad(m, "bad escape"))?);
            }
            if parts.is_empty() {
                return Err(bad(n, "message without content"));
            }
            folders
                .get_mut(folder)
                .expect("current folder")
                .push(StoredMessage {
                    uid,
                    wire: parts.join("\r\n"),
                });
        } else if !line.is_empty() {
            return Err(bad(n, "unexpected line"));
        }
    }
    if !folders.contains_key(INBOX) {
        return Err(bad(0, "snapshot lacks INBOX"));
    }
    for name in folders.keys() {
        if let Some((parent, _)) = name.rsplit_once('/') {
            if !folders.contains_key(parent) {
                return Err(bad(0, &format!("folder {name} has no parent")));
            }
        }
    }
    account.folders = folders;
    Ok(account)
}

#[cfg(test)]
mod tests {
    use super::super::MockEsp;
    use super::*;
    use crate::transport::MailboxPath;

    #[test]
    fn fresh_account_dump() {
        let esp = MockEsp::new_account("me@example.com", "pw", 64, false).unwrap();
        assert_eq!(
            esp.snapshot(),
            "emfs-mock-snapshot 1\naccount me@example.com\npassword pw\nsize-limit 64\n\
             tls off\nnext-uid 1\nfolder INBOX\n"
        );
    }

    #[test]
    fn submissions_dump_in_order_and_roundtrip() {
        let esp = MockEsp::new_account("me@example.com", "pw", 64, true).unwrap();
        esp.create_folder(&"EMFS".parse::<MailboxPath>().unwrap())
            .unwrap();
        for w in [
            "A: 1\r\n\r\nQQ==\r\n",
            "B: x\\y\r\n\r\n",
            "C: bare\nlf\r\n\r\n",
        ] {
            esp.submit(w).unwrap();
        }
        let dump = esp.snapshot();
        let inbox: Vec<_> = esp
            .account()
            .messages(INBOX)
            .unwrap()
            .iter()
            .map(|m| m.uid)
            .collect();
        assert_eq!(inbox, vec![1, 2, 3]);
        let reloaded = MockEsp::from_snapshot(&dump).unwrap();
        assert_eq!(reloaded.account(), esp.account());
        assert_eq!(reloaded.snapshot(), dump);
    }

    #[test]
    fn rejects_malformed_snapshots() {
        assert!(MockEsp::from_snapshot("nope").is_err());
        let orphan = "emfs-mock-snapshot 1\naccount a\npassword b\nsize-limit 1\ntls on\n\
                      next-uid 1\nfolder INBOX\nfolder X/Y\n";
        assert!(MockEsp::from_snapshot(orphan).is_err());
        let zero = "emfs-mock-snapshot 1\naccount a\npassword b\nsize-limit 0\ntls on\nnext-uid 1\nfolder INBOX\n";
        assert_eq!(
            MockEsp::from_snapshot(zero).unwrap_err(),
            MockError::ZeroSizeLimit
        );
    }
}
