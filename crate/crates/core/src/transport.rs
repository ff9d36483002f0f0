//! The mail verbs EMFS needs, independent of how they reach a server.
//!
//! [`MailTransport`] is implemented by [`crate::net::NetSession`] (SMTP and
//! IMAP over TCP with STARTTLS) and by [`crate::mock::MockSession`] (an
//! in-process provider used by the test suite and the CLI's `--mock` mode).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::codec::{ChainHeaders, EmfsMessage};

/// Folder delimiter used in EMFS paths. Backends translate it to whatever
/// the server advertises.
pub const DELIMITER: char = '/';

pub const INBOX: &str = "INBOX";

/// Gmail caps messages at 25 MB; taken as binary megabytes.
pub const GMAIL_SIZE_LIMIT: u64 = 25 * 1024 * 1024;
/// Outlook caps messages at 20 MB; taken as binary megabytes.
pub const OUTLOOK_SIZE_LIMIT: u64 = 20 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("authentication failed")]
    AuthFailed,
    #[error("server does not offer STARTTLS")]
    TlsUnavailable,
    #[error("connect failed: {0}")]
    ConnectFailed(String),
    #[error("folder {0} already exists")]
    AlreadyExists(MailboxPath),
    #[error("parent of {0} does not exist")]
    NoParent(MailboxPath),
    #[error("no such folder {0}")]
    NoSuchFolder(MailboxPath),
    #[error("folder {0} has subfolders")]
    HasSubfolders(MailboxPath),
    #[error("no such message {0}")]
    NoSuchMessage(MessageHandle),
    #[error("message too large: {payload} octets of payload, limit {limit}")]
    MessageTooLarge { payload: u64, limit: u64 },
    #[error("injected fault: {0}")]
    FaultInjected(String),
    #[error("invalid folder name {0:?}")]
    InvalidFolderName(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        TransportError::Io(e.to_string())
    }
}

/// `host:port`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub host: String,
    pub port: u16,
}

impl Endpoint {
    pub fn new(host: impl Into<String>, port: u16) -> Self {
        Self {
            host: host.into(),
            port,
        }
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (host, port) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("expected host:port, got {s:?}"))?;
        let port = port.parse().map_err(|_| format!("bad port in {s:?}"))?;
        if host.is_empty() {
            return Err(format!("empty host in {s:?}"));
        }
        Ok(Self::new(host, port))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.host, self.port)
    }
}

/// Connection settings and size limit for one email provider account.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderProfile {
    pub smtp_endpoint: Endpoint,
    pub imap_endpoint: Endpoint,
    pub username: String,
    /// Address the chain messages are sent from and to.
    pub address: String,
    /// Name of the environment variable holding the password.
    pub credential_ref: String,
    /// Maximum body payload per message, in octets.
    pub size_limit_s: u64,
    pub root_folder: String,
    pub use_tls: bool,
}

impl ProviderProfile {
    pub const DEFAULT_ROOT: &'static str = "EMFS";

    pub fn validate(&self) -> Result<(), String> {
        if self.size_limit_s < 1 {
            return Err("size limit must be at least 1 octet".into());
        }
        if self.root_folder.is_empty() || self.root_folder.contains(DELIMITER) {
            return Err(format!("invalid root folder {:?}", self.root_folder));
        }
        if self.root_folder.eq_ignore_ascii_case(INBOX) {
            return Err("the root folder cannot be INBOX".into());
        }
        if self.credential_ref.is_empty() {
            return Err("credential_ref must name an environment variable".into());
        }
        Ok(())
    }

    /// Looks the password up in the environment.
    pub fn credential(&self) -> Result<String, TransportError> {
        self.credential_with(|name| std::env::var(name).ok())
    }

    pub fn credential_with(
        &self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<String, TransportError> {
        lookup(&self.credential_ref)
            .ok_or_else(|| TransportError::MissingCredential(self.credential_ref.clone()))
    }
}

/// Folder path as a list of names, outermost first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MailboxPath {
    segments: Vec<String>,
}

impl MailboxPath {
    pub fn new<I, S>(segments: I) -> Result<Self, TransportError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(TransportError::InvalidFolderName(String::new()));
        }
        for s in &segments {
            check_segment(s)?;
        }
        Ok(Self { segments })
    }

    pub fn root(name: &str) -> Result<Self, TransportError> {
        Self::new([name])
    }

    pub fn inbox() -> Self {
        Self {
            segments: vec![INBOX.to_owned()],
        }
    }

    pub fn is_inbox(&self) -> bool {
        self.segments.len() == 1 && self.segments[0].eq_ignore_ascii_case(INBOX)
    }

    pub fn child(&self, name: &str) -> Result<Self, TransportError> {
        check_segment(name)?;
        let mut segments = self.segments.clone();
        segments.push(name.to_owned());
        Ok(Self { segments })
    }

    pub fn parent(&self) -> Option<Self> {
        (self.segments.len() > 1).then(|| Self {
            segments: self.segments[..self.segments.len() - 1].to_vec(),
        })
    }

    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn name(&self) -> &str {
        self.segments.last().expect("non-empty")
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }

    /// True when `self` equals `ancestor` or lies below it.
    pub fn starts_with(&self, ancestor: &MailboxPath) -> bool {
        self.segments.starts_with(&ancestor.segments)
    }

    pub fn join(&self, delimiter: char) -> String {
        let mut out = String::new();
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                out.push(delimiter);
            }
            out.push_str(s);
        }
        out
    }
}

fn check_segment(s: &str) -> Result<(), TransportError> {
    if s.is_empty() || s.contains(DELIMITER) || s.chars().any(char::is_control) {
        Err(TransportError::InvalidFolderName(s.to_owned()))
    } else {
        Ok(())
    }
}

impl fmt::Display for MailboxPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.join(DELIMITER))
    }
}

impl FromStr for MailboxPath {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s.split(DELIMITER))
    }
}

/// A message inside a folder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageHandle {
    pub mailbox: MailboxPath,
    pub uid: u64,
}

impl fmt::Display for MessageHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.mailbox, self.uid)
    }
}

/// Header summary of a message that carries EMFS headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderSummary {
    pub headers: ChainHeaders,
    /// Body payload octets, line breaks excluded.
    pub payload_octets: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ListedMessage {
    pub handle: MessageHandle,
    /// `None` for messages without (valid) EMFS headers.
    pub summary: Option<HeaderSummary>,
}

/// An authenticated session with one account.
///
/// Sessions are used by one caller at a time; `&mut self` on every verb
/// enforces that.
pub trait MailTransport {
    /// `CREATE`. Fails with `AlreadyExists` or `NoParent`; never silently
    /// succeeds on an existing folder.
    fn create_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError>;

    fn select_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError>;

    /// Immediate children of `path`.
    fn list_folders(&mut self, path: &MailboxPath) -> Result<Vec<MailboxPath>, TransportError>;

    /// `DELETE`. Refuses with `HasSubfolders` when `path` has children.
    fn delete_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError>;

    /// Submits over the send path; the provider delivers to the inbox.
    fn send_message(&mut self, message: &EmfsMessage) -> Result<(), TransportError>;

    /// Stores a message directly into a folder, bypassing delivery.
    fn append_message(
        &mut self,
        path: &MailboxPath,
        message: &EmfsMessage,
    ) -> Result<MessageHandle, TransportError>;

    fn fetch_message(&mut self, handle: &MessageHandle) -> Result<String, TransportError>;

    fn list_messages(&mut self, path: &MailboxPath) -> Result<Vec<ListedMessage>, TransportError>;

    fn move_message(
        &mut self,
        handle: &MessageHandle,
        dest: &MailboxPath,
    ) -> Result<MessageHandle, TransportError>;

    /// Flags the message deleted and expunges it.
    fn delete_message(&mut self, handle: &MessageHandle) -> Result<(), TransportError>;

    fn logout(&mut self) -> Result<(), TransportError>;

    fn folder_exists(&mut self, path: &MailboxPath) -> Result<bool, TransportError> {
        match path.parent() {
            Some(parent) => match self.list_folders(&parent) {
                Ok(children) => Ok(children.contains(path)),
                Err(TransportError::NoSuchFolder(_)) => Ok(false),
                Err(e) => Err(e),
            },
            None => match self.select_folder(path) {
                Ok(()) => Ok(true),
                Err(TransportError::NoSuchFolder(_)) => Ok(false),
                Err(e) => Err(e),
            },
        }
    }
}

impl<T: MailTransport + ?Sized> MailTransport for Box<T> {
    fn create_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        (**self).create_folder(path)
    }
    fn select_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        (**self).select_folder(path)
    }
    fn list_folders(&mut self, path: &MailboxPath) -> Result<Vec<MailboxPath>, TransportError> {
        (**self).list_folders(path)
    }
    fn delete_folder(&mut self, path: &MailboxPath) -> Result<(), TransportError> {
        (**self).delete_folder(path)
    }
    fn send_message(&mut self, message: &EmfsMessage) -> Result<(), TransportError> {
        (**self).send_message(message)
    }
    fn append_message(
        &mut self,
        path: &MailboxPath,
        message: &EmfsMessage,
    ) -> Result<MessageHandle, TransportError> {
        (**self).append_message(path, message)
    }
    fn fetch_message(&mut self, handle: &MessageHandle) -> Result<String, TransportError> {
        (**self).fetch_message(handle)
    }
    fn list_messages(&mut self, path: &MailboxPath) -> Result<Vec<ListedMessage>, TransportError> {
        (**self).list_messages(path)
    }
    fn move_message(
        &mut self,
        handle: &MessageHandle,
        dest: &MailboxPath,
    ) -> Result<MessageHandle, TransportError> {
        (**self).move_message(handle, dest)
    }
    fn delete_message(&mut self, handle: &MessageHandle) -> Result<(), TransportError> {
        (**self).delete_message(handle)
    }
    fn logout(&mut self) -> Result<(), TransportError> {
        (**self).logout()
    }
    fn folder_exists(&mut self, path: &MailboxPath) -> Result<bool, TransportError> {
        (**self).folder_exists(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mailbox_path_rules() {
        let root = MailboxPath::root("EMFS").unwrap();
        let b = root.child("a").unwrap().child("b").unwrap();
        assert_eq!(b.to_string(), "EMFS/a/b");
        assert_eq!(b.parent().unwrap().to_string(), "EMFS/a");
        assert!(b.starts_with(&root));
        assert!(!root.starts_with(&b));
        assert!(root.parent().is_none());
        assert!(root.child("").is_err());
        assert!(root.child("x/y").is_err());
        assert!(MailboxPath::new(Vec::<String>::new()).is_err());
        assert_eq!("EMFS/a/b".parse::<MailboxPath>().unwrap(), b);
        assert!("EMFS//b".parse::<MailboxPath>().is_err());
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            "imap.example.com:993".parse::<Endpoint>().unwrap(),
            Endpoint::new("imap.example.com", 993)
        );
        assert!("imap.example.com".parse::<Endpoint>().is_err());
        assert!(":25".parse::<Endpoint>().is_err());
    }

    #[test]
    fn profile_validation_and_credentials() {
        let mut p = ProviderProfile {
            smtp_endpoint: Endpoint::new("s", 587),
            imap_endpoint: Endpoint::new("i", 143),
            username: "me".into(),
            address: "me@example.com".into(),
            credential_ref: "EMFS_TEST_PW".into(),
            size_limit_s: GMAIL_SIZE_LIMIT,
            root_folder: "EMFS".into(),
            use_tls: true,
        };
        assert!(p.validate().is_ok());
        assert_eq!(
            p.credential_with(|_| None),
            Err(TransportError::MissingCredential("EMFS_TEST_PW".into()))
        );
        assert_eq!(p.credential_with(|_| Some("pw".into())).unwrap(), "pw");
        p.size_limit_s = 0;
        assert!(p.validate().is_err());
        p.size_limit_s = 1;
        p.root_folder = "a/b".into();
        assert!(p.validate().is_err());
    }
}
