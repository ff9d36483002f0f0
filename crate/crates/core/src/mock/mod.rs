//! In-process email provider for hermetic tests.
//!
//! [`MockEsp`] models one account: submitted mail lands in `INBOX`, folders
//! form a tree under `/`, and every message keeps the exact wire text it was
//! submitted with. Bodies whose payload exceeds the account's size limit are
//! refused. A [`FaultScript`] can drop sends, damage or remove stored
//! messages, refuse STARTTLS, or fail an operation outright.
//!
//! Every verb is applied under one lock, so handles may be cloned into
//! several sessions and threads.

mod shim;
mod snapshot;

pub use shim::{serve, ShimHandle};

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

use crate::codec::{parse_headers, payload_octets, split_message, EmfsMessage};
use crate::transport::{
    HeaderSummary, ListedMessage, MailTransport, MailboxPath, MessageHandle, ProviderProfile,
    TransportError, DELIMITER, INBOX,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MockError {
    #[error("size limit must be at least 1 octet")]
    ZeroSizeLimit,
    #[error("bad snapshot at line {line}: {reason}")]
    BadSnapshot { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredMessage {
    pub uid: u64,
    pub wire: String,
}

/// State of the simulated account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockAccount {
    pub address: String,
    pub password: String,
    pub size_limit_s: u64,
    pub tls_enabled: bool,
    folders: BTreeMap<String, Vec<StoredMessage>>,
    next_uid: u64,
}

impl MockAccount {
    pub fn new(
        address: impl Into<String>,
        password: impl Into<String>,
        size_limit_s: u64,
        tls_enabled: bool,
    ) -> Result<Self, MockError> {
        if size_limit_s == 0 {
            return Err(MockError::ZeroSizeLimit);
        }
        let mut folders = BTreeMap::new();
        folders.insert(INBOX.to_owned(), Vec::new());
        Ok(Self {
            address: address.into(),
            password: password.into(),
            size_limit_s,
            tls_enabled,
            folders,
            next_uid: 1,
        })
    }

    pub fn folder_names(&self) -> impl Iterator<Item = &str> {
        self.folders.keys().map(String::as_str)
    }

    pub fn messages(&self, folder: &str) -> Option<&[StoredMessage]> {
        self.folders.get(folder).map(Vec::as_slice)
    }

    fn key(path: &MailboxPath) -> String {
        if path.is_inbox() {
            INBOX.to_owned()
        } else {
            path.join(DELIMITER)
        }
    }

    fn children(&self, key: &str) -> Vec<String> {
        let prefix = format!("{key}{DELIMITER}");
        self.folders
            .keys()
            .filter(|k| k.starts_with(&prefix) && !k[prefix.len()..].contains(DELIMITER))
            .cloned()
            .collect()
    }

    fn take_uid(&mut self) -> u64 {
        let uid = self.next_uid;
        self.next_uid += 1;
        uid
    }

    fn locate(&self, uid: u64) -> Option<(String, usize)> {
        self.folders.iter().find_map(|(k, msgs)| {
            msgs.iter()
                .position(|m| m.uid == uid)
                .map(|i| (k.clone(), i))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FaultDirective {
    /// Accept the n-th send (1-based, counted while this directive is
    /// current) but never deliver it.
    DropNthSend(usize),
    /// Damage one body character of the message with this uid.
    CorruptMessage(u64),
    /// Remove the message with this uid.
    DeleteMessage(u64),
    /// Refuse STARTTLS on the next login.
    RefuseTls,
    /// Let `k` operations through, then fail the next one.
    FailAfter(usize),
}

/// Directives are consumed front to back; only the first is active.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultScript(pub Vec<FaultDirective>);

impl FaultScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn then(mut self, d: FaultDirective) -> Self {
        self.0.push(d);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Verb {
    Login,
    Submit,
    Other,
}

/// One entry of the operation journal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockEvent {
    Login {
        user: String,
    },
    Submitted {
        uid: u64,
    },
    SubmitDropped,
    CreateFolder(String),
    DeleteFolder(String),
    Select(String),
    ListFolders(String),
    ListMessages(String),
    Append {
        folder: String,
        uid: u64,
    },
    Fetch {
        folder: String,
        uid: u64,
    },
    Move {
        from: String,
        uid: u64,
        to: String,
        new_uid: u64,
    },
    Expunge {
        folder: String,
        uid: u64,
    },
    Logout,
    FaultCorrupted {
        uid: u64,
    },
    FaultDeleted {
        uid: u64,
    },
    FaultFailed,
}

#[derive(Debug)]
struct MockState {
    account: MockAccount,
    faults: VecDeque<FaultDirective>,
    fault_counter: usize,
    journal: Vec<MockEvent>,
}

enum Admission {
    Proceed,
    Drop,
}

impl MockState {
    fn pop_fault(&mut self) {
        self.faults.pop_front();
        self.fault_counter = 0;
    }

    fn admit(&mut self, verb: Verb, wants_tls: bool) -> Result<Admission, TransportError> {
        loop {
            match self.faults.front().cloned() {
                None => return Ok(Admission::Proceed),
                Some(FaultDirective::CorruptMessage(uid)) => {
                    self.pop_fault();
                    if corrupt(&mut self.account, uid) {
                        self.journal.push(MockEvent::FaultCorrupted { uid });
                    }
                }
                Some(FaultDirective::DeleteMessage(uid)) => {
                    self.pop_fault();
                    if let Some((folder, i)) = self.account.locate(uid) {
                        self.account
                            .folders
                            .get_mut(&folder)
                            .expect("located")
                            .remove(i);
                        self.journal.push(MockEvent::FaultDeleted { uid });
                    }
                }
                Some(FaultDirective::RefuseTls) => {
                    if verb == Verb::Login {
                        self.pop_fault();
                        if wants_tls {
                            return Err(TransportError::TlsUnavailable);
                        }
                    }
                    return Ok(Admission::Proceed);
                }
                Some(FaultDirective::DropNthSend(n)) => {
                    if verb == Verb::Submit {
                        self.fault_counter += 1;
                        if self.fault_counter >= n {
                            self.pop_fault();
                            return Ok(Admission::Drop);
                        }
                    }
                    return Ok(Admission::Proceed);
                }
                Some(FaultDirective::FailAfter(k)) => {
                    if self.fault_counter >= k {
                        self.pop_fault();
                        self.journal.push(MockEvent::FaultFailed);
                        return Err(TransportError::FaultInjected(format!(
                            "operation failed after {k} successful operations"
                        )));
                    }
                    self.fault_counter += 1;
                    return Ok(Admission::Proceed);
                }
            }
        }
    }
}

/// Swaps one body character for another alphabet character.
fn corrupt(account: &mut MockAccount, uid: u64) -> bool {
    let Some((folder, i)) = account.locate(uid) else {
        return false;
    };
    let msg = &mut account.folders.get_mut(&folder).expect("located")[i];
    let header_len = msg.wire.len() - split_message(&msg.wire).1.len();
    let mut bytes = msg.wire.clone().into_bytes();
    match bytes[header_len..]
        .iter()
        .position(|b| b.is_ascii_alphanumeric())
    {
        Some(p) => {
            let b = &mut bytes[header_len + p];
            *b = if *b == b'A' { b'B' } else { b'A' };
        }
        None => bytes.extend_from_slice(b"QQ==\r\n"),
    }
    msg.wire = String::from_utf8(bytes).expect("ascii substitution");
    true
}

/// Shared handle to one simulated account.
#[derive(Debug, Clone)]
pub struct MockEsp {
    inner: Arc<Mutex<MockState>>,
}

impl MockEsp {
    pub fn new(account: MockAccount) -> Self {
        Self {
            inner: Arc::new(Mutex::new(MockState {
                account,
                faults: VecDeque::new(),
                fault_counter: 0,
                journal: Vec::new(),
            })),
        }
    }

    pub fn new_account(
        address: &str,
        password: &str,
        size_limit_s: u64,
        tls_enabled: bool,
    ) -> Result<Self, MockError> {
        MockAccount::new(address, password, size_limit_s, tls_enabled).map(Self::new)
    }

    fn state(&self) -> MutexGuard<'_, MockState> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Copy of the account state.
    pub fn account(&self) -> MockAccount {
        self.state().account.clone()
    }

    pub fn set_faults(&self, script: FaultScript) {
        let mut st = self.state();
        st.faults = script.0.into();
        st.fault_counter = 0;
    }

    pub fn pending_faults(&self) -> usize {
        self.state().faults.len()
    }

    pub fn journal(&self) -> Vec<MockEvent> {
        self.state().journal.clone()
    }

    pub fn clear_journal(&self) {
        self.state().journal.clear();
    }

    /// Line-oriented dump of every folder and message, in stored order.
    pub fn snapshot(&self) -> String {
        snapshot::render(&self.state().account)
    }

    pub fn from_snapshot(text: &str) -> Result<Self, MockError> {
        snapshot::parse(text).map(Self::new)
    }

    pub fn message_count(&self, folder: &str) -> Option<usize> {
        self.state().account.folders.get(folder).map(Vec::len)
    }

    /// Removes a message behind every session's back.
    pub fn remove_message(&self, uid: u64) -> bool {
        let mut st = self.state();
        match st.account.locate(uid) {
            Some((folder, i)) => {
                st.account
                    .folders
                    .get_mut(&folder)
                    .expect("located")
                    .remove(i);
                true
            }
            None => false,
        }
    }

    /// Appends arbitrary wire text to a folder, bypassing the size check.
    pub fn inject_raw(&self, folder: &str, wire: &str) -> Option<u64> {
        let mut st = self.state();
        let uid = st.account.next_uid;
        let msgs = st.account.folders.get_mut(folder)?;
        msgs.push(StoredMessage {
            uid,
            wire: wire.to_owned(),
        });
        st.account.next_uid += 1;
        Some(uid)
    }

    /// Authenticates a session.
    pub fn login(
        &self,
        user: &str,
        password: &str,
        use_tls: bool,
    ) -> Result<MockSession, TransportError> {
        let mut st = self.state();
        st.admit(Verb::Login, use_tls)?;
        if use_tls && !st.account.tls_enabled {
            return Err(TransportError::TlsUnavailable);
        }
        if user != st.account.address || password != st.account.password {
            return Err(TransportError::AuthFailed);
        }
        st.journal.push(MockEvent::Login {
            user: user.to_owned(),
        });
        Ok(MockSession {
            esp: self.clone(),
            selected: None,
        })
    }

    pub fn connect(
        &self,
        profile: &ProviderProfile,
        password: &str,
    ) -> Result<MockSession, TransportError> {
        self.login(&profile.username, password, profile.use_tls)
    }

    /// SMTP submission: the message is delivered to `INBOX`.
    /// Returns `None` when a fault dropped it in transit.
    pub fn submit(&self, wire: &str) -> Result<Option<u64>, TransportError> {
        let mut st = self.state();
        let admission = st.admit(Verb::Submit, false)?;
        let payload = payload_octets(wire);
        if payload > st.account.size_limit_s {
            return Err(TransportError::MessageTooLarge {
                payload,
                limit: st.account.size_limit_s,
            });
        }
        if let Admission::Drop = admission {
            st.journal.push(MockEvent::SubmitDropped);
            return Ok(None);
        }
        let uid = st.account.take_uid();
        st.account
            .folders
            .get_mut(INBOX)
            .expect("INBOX always exists")
            .push(StoredMessage {
                uid,
                wire: wire.to_owned(),
            });
        st.journal.push(MockEvent::Submitted { uid });
        Ok(Some(uid))
    }

    pub fn create_folder(&self, path: &MailboxPath) -> Result<(), TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(path);
        if st.account.folders.contains_key(&key) {
            return Err(TransportError::AlreadyExists(path.clone()));
        }
        if let Some(parent) = path.parent() {
            if !st.account.folders.contains_key(&MockAccount::key(&parent)) {
                return Err(TransportError::NoParent(path.clone()));
            }
        }
        st.account.folders.insert(key.clone(), Vec::new());
        st.journal.push(MockEvent::CreateFolder(key));
        Ok(())
    }

    pub fn delete_folder(&self, path: &MailboxPath) -> Result<(), TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(path);
        if key == INBOX {
            return Err(TransportError::Protocol("INBOX cannot be deleted".into()));
        }
        if !st.account.folders.contains_key(&key) {
            return Err(TransportError::NoSuchFolder(path.clone()));
        }
        if !st.account.children(&key).is_empty() {
            return Err(TransportError::HasSubfolders(path.clone()));
        }
        st.account.folders.remove(&key);
        st.journal.push(MockEvent::DeleteFolder(key));
        Ok(())
    }

    pub fn select_folder(&self, path: &MailboxPath) -> Result<(), TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(path);
        if !st.account.folders.contains_key(&key) {
            return Err(TransportError::NoSuchFolder(path.clone()));
        }
        st.journal.push(MockEvent::Select(key));
        Ok(())
    }

    pub fn list_folders(&self, path: &MailboxPath) -> Result<Vec<MailboxPath>, TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(path);
        if !st.account.folders.contains_key(&key) {
            return Err(TransportError::NoSuchFolder(path.clone()));
        }
        let children = st
            .account
            .children(&key)
            .iter()
            .map(|k| k.parse())
            .collect::<Result<Vec<MailboxPath>, _>>()?;
        st.journal.push(MockEvent::ListFolders(key));
        Ok(children)
    }

    pub fn append(&self, path: &MailboxPath, wire: &str) -> Result<MessageHandle, TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(path);
        if !st.account.folders.contains_key(&key) {
            return Err(TransportError::NoSuchFolder(path.clone()));
        }
        let payload = payload_octets(wire);
        if payload > st.account.size_limit_s {
            return Err(TransportError::MessageTooLarge {
                payload,
                limit: st.account.size_limit_s,
            });
        }
        let uid = st.account.take_uid();
        st.account
            .folders
            .get_mut(&key)
            .expect("checked")
            .push(StoredMessage {
                uid,
                wire: wire.to_owned(),
            });
        st.journal.push(MockEvent::Append { folder: key, uid });
        Ok(MessageHandle {
            mailbox: path.clone(),
            uid,
        })
    }

    pub fn fetch(&self, handle: &MessageHandle) -> Result<String, TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(&handle.mailbox);
        let msgs = st
            .account
            .folders
            .get(&key)
            .ok_or_else(|| TransportError::NoSuchFolder(handle.mailbox.clone()))?;
        let wire = msgs
            .iter()
            .find(|m| m.uid == handle.uid)
            .map(|m| m.wire.clone())
            .ok_or_else(|| TransportError::NoSuchMessage(handle.clone()))?;
        st.journal.push(MockEvent::Fetch {
            folder: key,
            uid: handle.uid,
        });
        Ok(wire)
    }

    pub fn list_messages(&self, path: &MailboxPath) -> Result<Vec<ListedMessage>, TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(path);
        let msgs = st
            .account
            .folders
            .get(&key)
            .ok_or_else(|| TransportError::NoSuchFolder(path.clone()))?;
        let listed = msgs
            .iter()
            .map(|m| ListedMessage {
                handle: MessageHandle {
                    mailbox: path.clone(),
                    uid: m.uid,
                },
                summary: parse_headers(split_message(&m.wire).0).ok().map(|headers| {
                    HeaderSummary {
                        headers,
                        payload_octets: payload_octets(&m.wire),
                    }
                }),
            })
            .collect();
        st.journal.push(MockEvent::ListMessages(key));
        Ok(listed)
    }

    pub fn move_message(
        &self,
        handle: &MessageHandle,
        dest: &MailboxPath,
    ) -> Result<MessageHandle, TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let from = MockAccount::key(&handle.mailbox);
        let to = MockAccount::key(dest);
        if !st.account.folders.contains_key(&to) {
            return Err(TransportError::NoSuchFolder(dest.clone()));
        }
        let msgs = st
            .account
            .folders
            .get_mut(&from)
            .ok_or_else(|| TransportError::NoSuchFolder(handle.mailbox.clone()))?;
        let pos = msgs
            .iter()
            .position(|m| m.uid == handle.uid)
            .ok_or_else(|| TransportError::NoSuchMessage(handle.clone()))?;
        let mut msg = msgs.remove(pos);
        let new_uid = st.account.take_uid();
        msg.uid = new_uid;
        st.account.folders.get_mut(&to).expect("checked").push(msg);
        st.journal.push(MockEvent::Move {
            from,
            uid: handle.uid,
            to,
            new_uid,
        });
        Ok(MessageHandle {
            mailbox: dest.clone(),
            uid: new_uid,
        })
    }

    pub fn expunge(&self, handle: &MessageHandle) -> Result<(), TransportError> {
        let mut st = self.state();
        st.admit(Verb::Other, false)?;
        let key = MockAccount::key(&handle.mailbox);
        let msgs = st
            .account
            .folders
            .get_mut(&key)
            .ok_or_else(|| TransportError::NoSuchFolder(handle.mailbox.clone()))?;
        let pos = msgs
            .iter()
            .position(|m| m.uid == handle.uid)
            .ok_or_else(|| TransportError::NoSuchMessage(handle.clone()))?;
        msgs.remove(pos);
        st.journal.push(MockEvent::Expunge {
            folder: key,
            uid: handle.uid,
        });
        Ok(())
    }
}

/// A logged-in session against a [`MockEsp`].
#[derive(Debug)]
pub struct MockSession {
    esp: MockEsp,
    selected: Option<MailboxPath>,
}

impl MockSession {
    pub fn esp(&self) -> &MockEsp {
        &self.esp
    }

    pub fn selected(&self) -> Option<&MailboxPath> {
        self.selected.as_ref()
    }
}

impl MailTransport for MockSession {
    fn create_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        self.esp.create_folder(path)
    }

    fn select_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        self.esp.select_folder(path)?;
        self.selected = Some(path.clone());
        Ok(())
    }

    fn list_folders(&mut self, path: &MailboxPath) -> Result<Vec<MailboxPath>, TransportError> {
        self.esp.list_folders(path)
    }

    fn delete_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        self.esp.delete_folder(path)?;
        if self.selected.as_ref() == Some(path) {
            self.selected = None;
        }
        Ok(())
    }

    fn send_message(&mut self, message: &EmfsMessage) -> Result<(), TransportError> {
        self.esp.submit(&message.to_wire()).map(|_| ())
    }

    fn append_message(
        &mut self,
        path: &MailboxPath,
        message: &EmfsMessage,
    ) -> Result<MessageHandle, TransportError> {
        self.esp.append(path, &message.to_wire())
    }

    fn fetch_message(&mut self, handle: &MessageHandle) -> Result<String, TransportError> {
        self.esp.fetch(handle)
    }

    fn list_messages(&mut self, path: &MailboxPath) -> Result<Vec<ListedMessage>, TransportError> {
        self.esp.list_messages(path)
    }

    fn move_message(
        &mut self,
        handle: &MessageHandle,
        dest: &MailboxPath,
    ) -> Result<MessageHandle, TransportError> {
        self.esp.move_message(handle, dest)
    }

    fn delete_message(&mut self, handle: &MessageHandle) -> Result<(), TransportError> {
        self.esp.expunge(handle)
    }

    fn logout(&mut self) -> Result<(), TransportError> {
        self.esp.state().journal.push(MockEvent::Logout);
        self.selected = None;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode8, pack, slice_encoded};

    fn esp(limit: u64) -> MockEsp {
        MockEsp::new_account("me@example.com", "pw", limit, true).unwrap()
    }

    fn path(s: &str) -> MailboxPath {
        s.parse().unwrap()
    }

    fn wire_with_payload(n: usize) -> String {
        format!("Subject: x\r\n\r\n{}\r\n", "A".repeat(n))
    }

    #[test]
    fn new_account_has_inbox_and_rejects_zero_limit() {
        let e = esp(10);
        assert_eq!(e.message_count(INBOX), Some(0));
        assert_eq!(
            MockEsp::new_account("a", "b", 0, true).unwrap_err(),
            MockError::ZeroSizeLimit
        );
        let gmail =
            MockEsp::new_account("a", "b", crate::transport::GMAIL_SIZE_LIMIT, true).unwrap();
        assert_eq!(gmail.account().size_limit_s, 26_214_400);
    }

    #[test]
    fn login_checks_password_and_tls() {
        let e = esp(10);
        assert!(e.login("me@example.com", "pw", true).is_ok());
        assert_eq!(
            e.login("me@example.com", "nope", true).unwrap_err(),
            TransportError::AuthFailed
        );
        let plain = MockEsp::new_account("me@example.com", "pw", 10, false).unwrap();
        assert_eq!(
            plain.login("me@example.com", "pw", true).unwrap_err(),
            TransportError::TlsUnavailable
        );
        assert!(plain.login("me@example.com", "pw", false).is_ok());
    }

    #[test]
    fn cap_is_exact_at_boundary() {
        for s in [1u64, 100, 25 * 1024 * 1024] {
            let e = esp(s);
            assert!(e.submit(&wire_with_payload(s as usize)).unwrap().is_some());
            assert_eq!(
                e.submit(&wire_with_payload(s as usize + 1)).unwrap_err(),
                TransportError::MessageTooLarge {
                    payload: s + 1,
                    limit: s
                }
            );
            assert_eq!(e.message_count(INBOX), Some(1));
        }
    }

    #[test]
    fn dropped_send_is_silent() {
        let e = esp(100);
        e.set_faults(FaultScript::new().then(FaultDirective::DropNthSend(2)));
        let uids: Vec<_> = (1..=3)
            .map(|i| e.submit(&format!("Subject: {i}\r\n\r\n")).unwrap())
            .collect();
        assert_eq!(uids, vec![Some(1), None, Some(2)]);
        let inbox = e.account().messages(INBOX).unwrap().to_vec();
        let subjects: Vec<_> = inbox
            .iter()
            .map(|m| m.wire.lines().next().unwrap().to_owned())
            .collect();
        assert_eq!(subjects, vec!["Subject: 1", "Subject: 3"]);
        assert_eq!(e.pending_faults(), 0);
    }

    #[test]
    fn fail_after_fails_exactly_one_operation() {
        let e = esp(100);
        e.set_faults(FaultScript::new().then(FaultDirective::FailAfter(2)));
        let root = path("EMFS");
        e.create_folder(&root).unwrap();
        e.select_folder(&root).unwrap();
        assert!(matches!(
            e.list_folders(&root),
            Err(TransportError::FaultInjected(_))
        ));
        assert!(e.list_folders(&root).is_ok());
    }

    #[test]
    fn folder_tree_rules() {
        let e = esp(100);
        let a = path("EMFS");
        let ab = path("EMFS/b");
        assert_eq!(
            e.create_folder(&ab).unwrap_err(),
            TransportError::NoParent(ab.clone())
        );
        e.create_folder(&a).unwrap();
        e.create_folder(&ab).unwrap();
        assert_eq!(
            e.create_folder(&a).unwrap_err(),
            TransportError::AlreadyExists(a.clone())
        );
        assert_eq!(e.list_folders(&a).unwrap(), vec![ab.clone()]);
        assert_eq!(
            e.delete_folder(&a).unwrap_err(),
            TransportError::HasSubfolders(a.clone())
        );
        assert!(e.account().messages("EMFS/b").is_some());
        e.delete_folder(&ab).unwrap();
        e.delete_folder(&a).unwrap();
        assert!(e.delete_folder(&MailboxPath::inbox()).is_err());
        assert_eq!(e.account().folder_names().collect::<Vec<_>>(), vec![INBOX]);
    }

    #[test]
    fn move_preserves_wire_and_expunge_removes() {
        let e = esp(1000);
        let dest = path("EMFS");
        e.create_folder(&dest).unwrap();
        let msg = &pack(
            "f",
            &slice_encoded(&encode8(b"hello"), 100),
            "me@example.com",
        )[0];
        let uid = e.submit(&msg.to_wire()).unwrap().unwrap();
        let h = MessageHandle {
            mailbox: MailboxPath::inbox(),
            uid,
        };
        let moved = e.move_message(&h, &dest).unwrap();
        assert_eq!(e.fetch(&moved).unwrap(), msg.to_wire());
        assert_eq!(
            e.fetch(&h).unwrap_err(),
            TransportError::NoSuchMessage(h.clone())
        );
        let listed = e.list_messages(&dest).unwrap();
        assert_eq!(listed[0].summary.as_ref().unwrap().payload_octets, 8);
        e.expunge(&moved).unwrap();
        assert_eq!(e.message_count("EMFS"), Some(0));
    }

    #[test]
    fn corrupt_and_delete_directives_fire_on_next_operation() {
        let e = esp(1000);
        let uid1 = e.submit("Subject: a\r\n\r\nQUJD\r\n").unwrap().unwrap();
        let uid2 = e.submit("Subject: b\r\n\r\nQUJD\r\n").unwrap().unwrap();
        e.set_faults(
            FaultScript::new()
                .then(FaultDirective::CorruptMessage(uid1))
                .then(FaultDirective::DeleteMessage(uid2)),
        );
        let listed = e.list_messages(&MailboxPath::inbox()).unwrap();
        assert_eq!(listed.len(), 1);
        let wire = e.account().messages(INBOX).unwrap()[0].wire.clone();
        assert_eq!(wire, "Subject: a\r\n\r\nAUJD\r\n");
    }

    #[test]
    fn refuse_tls_applies_once() {
        let e = esp(10);
        e.set_faults(FaultScript::new().then(FaultDirective::RefuseTls));
        assert_eq!(
            e.login("me@example.com", "pw", true).unwrap_err(),
            TransportError::TlsUnavailable
        );
        assert!(e.login("me@example.com", "pw", true).is_ok());
    }
}
