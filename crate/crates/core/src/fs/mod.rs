//! Files and directories on top of a [`MailTransport`].
//!
//! Directories are IMAP folders under one root folder. A file is a chain of
//! messages in its directory: the base-64 text of the file is cut into
//! slices of at most `S` octets, one slice per message, each message naming
//! the id-hash of the next.

mod chain;
mod index;

use std::thread;
use std::time::Duration;

use log::{debug, info, warn};
use thiserror::Error;

use crate::codec::{
    decode8, encode8, pack, slice_encoded, validate_filename, CodecError, EmfsMessage, EncodedText,
    IdHash, NextId, FRAMING_ALLOWANCE,
};
use crate::transport::{
    MailTransport, MailboxPath, MessageHandle, ProviderProfile, TransportError, DELIMITER,
};
use chain::ChainWalker;
pub use index::{DirListing, FileEntry, FsIndex, SkippedMessage};

/// How a chain reaches its directory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Delivery {
    /// Submit over SMTP, then move the delivered copies out of the inbox.
    #[default]
    SendAndRelocate,
    /// `APPEND` each message straight into the directory.
    DirectAppend,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsOptions {
    pub root_folder: String,
    /// Maximum base-64 payload per message.
    pub size_limit: usize,
    /// Sender and recipient of every chain message.
    pub address: String,
    pub delivery: Delivery,
    /// Inbox listings tried before a sent chain counts as lost.
    pub relocate_attempts: u32,
    pub relocate_delay: Duration,
}

impl FsOptions {
    pub fn from_profile(profile: &ProviderProfile) -> Self {
        Self {
            root_folder: profile.root_folder.clone(),
            size_limit: usize::try_from(profile.size_limit_s).unwrap_or(usize::MAX),
            address: profile.address.clone(),
            delivery: Delivery::default(),
            relocate_attempts: 10,
            relocate_delay: Duration::from_secs(2),
        }
    }

    /// Options for a provider that delivers synchronously.
    pub fn immediate(root_folder: &str, size_limit: usize, address: &str) -> Self {
        Self {
            root_folder: root_folder.to_owned(),
            size_limit,
            address: address.to_owned(),
            delivery: Delivery::default(),
            relocate_attempts: 1,
            relocate_delay: Duration::ZERO,
        }
    }
}

#[derive(Debug, Error)]
pub enum FsError {
    #[error("no file {filename:?} in {dir}")]
    NoSuchFile { dir: MailboxPath, filename: String },
    #[error("no such directory {0}")]
    NoSuchFolder(MailboxPath),
    #[error("{filename:?} already exists in {dir}")]
    FileExists { dir: MailboxPath, filename: String },
    #[error("invalid name: {0}")]
    InvalidName(String),
    #[error(
        "broken chain for {filename:?} in {dir}: link {position} ({missing}) not found, {} message(s) left behind",
        remaining.len()
    )]
    BrokenChain {
        dir: MailboxPath,
        filename: String,
        position: usize,
        missing: IdHash,
        /// Messages of the chain that were not reached.
        remaining: Vec<MessageHandle>,
    },
    #[error(
        "upload of {filename:?} incomplete: {delivered} of {expected} messages arrived ({cause})"
    )]
    PartialUpload {
        filename: String,
        delivered: usize,
        expected: usize,
        cause: String,
    },
    #[error("cannot create root folder: {0}")]
    RootCreateFailed(TransportError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl FsError {
    /// Short name of the error kind.
    pub fn class(&self) -> &'static str {
        match self {
            FsError::NoSuchFile { .. } => "NoSuchFile",
            FsError::NoSuchFolder(_) => "NoSuchFolder",
            FsError::FileExists { .. } => "FileExists",
            FsError::InvalidName(_) => "InvalidName",
            FsError::BrokenChain { .. } => "BrokenChain",
            FsError::PartialUpload { .. } => "PartialUpload",
            FsError::RootCreateFailed(_) => "RootCreateFailed",
            FsError::Codec(_) => "Codec",
            FsError::Transport(e) => match e {
                TransportError::AuthFailed => "AuthFailed",
                TransportError::TlsUnavailable => "TlsUnavailable",
                TransportError::ConnectFailed(_) => "ConnectFailed",
                TransportError::AlreadyExists(_) => "AlreadyExists",
                TransportError::NoParent(_) => "NoParent",
                TransportError::NoSuchFolder(_) => "NoSuchFolder",
                TransportError::HasSubfolders(_) => "HasSubfolders",
                TransportError::NoSuchMessage(_) => "NoSuchMessage",
                TransportError::MessageTooLarge { .. } => "MessageTooLarge",
                TransportError::FaultInjected(_) => "FaultInjected",
                TransportError::InvalidFolderName(_) => "InvalidName",
                TransportError::MissingCredential(_) => "MissingCredential",
                TransportError::Protocol(_) => "Protocol",
                TransportError::Io(_) => "Io",
            },
        }
    }
}

/// A mounted EMFS: a transport, the root folder and the cached index.
pub struct FsInstance<T: MailTransport> {
    transport: T,
    options: FsOptions,
    root: MailboxPath,
    index: FsIndex,
    root_created: bool,
}

impl<T: MailTransport> FsInstance<T> {
    /// Creates the root folder unless it exists, then indexes it.
    pub fn init(mut transport: T, options: FsOptions) -> Result<Self, FsError> {
        let root = root_path(&options)?;
        let root_created = match transport.create_folder(&root) {
            Ok(()) => {
                info!("created root folder {root}");
                true
            }
            Err(TransportError::AlreadyExists(_)) => false,
            Err(e) => return Err(FsError::RootCreateFailed(e)),
        };
        let index = FsIndex::build(&mut transport, &root)?;
        Ok(Self {
            transport,
            options,
            root,
            index,
            root_created,
        })
    }

    /// Mounts an existing root folder.
    pub fn open(mut transport: T, options: FsOptions) -> Result<Self, FsError> {
        let root = root_path(&options)?;
        if !transport.folder_exists(&root)? {
            return Err(FsError::NoSuchFolder(root));
        }
        let index = FsIndex::build(&mut transport, &root)?;
        Ok(Self {
            transport,
            options,
            root,
            index,
            root_created: false,
        })
    }

    /// Whether [`FsInstance::init`] had to create the root folder.
    pub fn root_created(&self) -> bool {
        self.root_created
    }

    pub fn root(&self) -> &MailboxPath {
        &self.root
    }

    pub fn options(&self) -> &FsOptions {
        &self.options
    }

    pub fn index(&self) -> &FsIndex {
        &self.index
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    pub fn into_transport(self) -> T {
        self.transport
    }

    pub fn close(mut self) -> Result<T, FsError> {
        self.transport.logout()?;
        Ok(self.transport)
    }

    /// Maps a slash-separated path relative to the root onto a folder.
    /// The empty path, `/` and `.` name the root itself.
    pub fn resolve(&self, path: &str) -> Result<MailboxPath, FsError> {
        let trimmed = path.trim_matches(DELIMITER);
        if trimmed.is_empty() || trimmed == "." {
            return Ok(self.root.clone());
        }
        let mut dir = self.root.clone();
        for segment in trimmed.split(DELIMITER) {
            if segment.is_empty() || segment == "." || segment == ".." {
                return Err(FsError::InvalidName(format!(
                    "bad path segment {segment:?} in {path:?}"
                )));
            }
            dir = dir
                .child(segment)
                .map_err(|_| FsError::InvalidName(format!("bad directory name {segment:?}")))?;
        }
        Ok(dir)
    }

    /// Rebuilds the index from the server.
    pub fn build_index(&mut self) -> Result<&FsIndex, FsError> {
        self.index = if self.transport.folder_exists(&self.root)? {
            FsIndex::build(&mut self.transport, &self.root)?
        } else {
            FsIndex::empty()
        };
        Ok(&self.index)
    }

    /// Files and subdirectory names of one directory, from the index.
    pub fn list_dir(&self, dir: &MailboxPath) -> Result<(Vec<FileEntry>, Vec<String>), FsError> {
        let listing = self
            .index
            .dir(dir)
            .ok_or_else(|| FsError::NoSuchFolder(dir.clone()))?;
        Ok((
            listing.files().cloned().collect(),
            listing.subdirs().map(str::to_owned).collect(),
        ))
    }

    /// Creates `dir` and any missing ancestors below the root. Returns the
    /// folders actually created, outermost first.
    pub fn mkdir(&mut self, dir: &MailboxPath) -> Result<Vec<MailboxPath>, FsError> {
        if !dir.starts_with(&self.root) || *dir == self.root {
            return Err(FsError::InvalidName(format!(
                "{dir} is not below {}",
                self.root
            )));
        }
        if !self.index.contains_dir(&self.root) {
            return Err(FsError::NoSuchFolder(self.root.clone()));
        }
        let mut created = Vec::new();
        let mut current = self.root.clone();
        for segment in &dir.segments()[self.root.depth()..] {
            current = current.child(segment)?;
            if self.index.contains_dir(&current) {
                continue;
            }
            match self.transport.create_folder(&current) {
                Ok(()) => created.push(current.clone()),
                Err(TransportError::AlreadyExists(_)) => {
                    debug!("{current} already on the server");
                    self.index.add_dir(&current);
                    self.index.refresh_dir(&mut self.transport, &current)?;
                }
                Err(e) => return Err(e.into()),
            }
            self.index.add_dir(&current);
            self.transport.select_folder(&current)?;
        }
        Ok(created)
    }

    /// Deletes `dir` with all its files and subdirectories, children before
    /// parents. Returns the folders removed in deletion order.
    pub fn rmdir(&mut self, dir: &MailboxPath) -> Result<Vec<MailboxPath>, FsError> {
        if !dir.starts_with(&self.root) {
            return Err(FsError::InvalidName(format!(
                "{dir} is not below {}",
                self.root
            )));
        }
        if !self.index.contains_dir(dir) && !self.transport.folder_exists(dir)? {
            return Err(FsError::NoSuchFolder(dir.clone()));
        }
        let mut removed = Vec::new();
        let result = remove_tree(&mut self.transport, dir, &mut removed);
        for path in &removed {
            self.index.remove_tree(path);
        }
        result?;
        Ok(removed)
    }

    /// Stores `data` as `filename` in `dir`.
    pub fn put(
        &mut self,
        data: &[u8],
        dir: &MailboxPath,
        filename: &str,
        overwrite: bool,
    ) -> Result<FileEntry, FsError> {
        validate_filename(filename).map_err(|e| FsError::InvalidName(e.to_string()))?;
        if !self.index.contains_dir(dir) {
            return Err(FsError::NoSuchFolder(dir.clone()));
        }
        if self.index.file(dir, filename).is_some() {
            if !overwrite {
                return Err(FsError::FileExists {
                    dir: dir.clone(),
                    filename: filename.to_owned(),
                });
            }
            self.delete(dir, filename)?;
        }

        let encoded = encode8(data);
        let slices = slice_encoded(&encoded, self.options.size_limit);
        let chain = pack(filename, &slices, &self.options.address);
        let header_len = chain[0].header_block().len();
        if header_len > FRAMING_ALLOWANCE {
            return Err(FsError::InvalidName(format!(
                "{filename:?} makes a {header_len}-octet header, over the {FRAMING_ALLOWANCE}-octet allowance"
            )));
        }
        let entry = FileEntry {
            filename: filename.to_owned(),
            first_id: chain[0].first_id.clone(),
            chain_length: chain.len() as u64,
            encoded_size: encoded.len() as u64,
        };
        debug!(
            "{filename:?}: {} octets, {} message(s)",
            encoded.len(),
            chain.len()
        );

        let result = match self.options.delivery {
            Delivery::SendAndRelocate => self.send_and_relocate(&chain, dir),
            Delivery::DirectAppend => self.append_chain(&chain, dir),
        };
        match result {
            Ok(()) => {
                self.index.insert_file(dir, entry.clone());
                Ok(entry)
            }
            Err(e) => {
                if let Err(re) = self.index.refresh_dir(&mut self.transport, dir) {
                    warn!("could not refresh {dir} after failed put: {re}");
                }
                Err(e)
            }
        }
    }

    fn send_and_relocate(
        &mut self,
        chain: &[EmfsMessage],
        dir: &MailboxPath,
    ) -> Result<(), FsError> {
        let first = &chain[0];
        let expected = chain.len();
        for (k, message) in chain.iter().enumerate() {
            if let Err(e) = self.transport.send_message(message) {
                if k == 0 {
                    return Err(e.into());
                }
                let arrived = self.find_in_inbox(&first.first_id, &first.filename, 1)?;
                self.purge(&arrived);
                return Err(FsError::PartialUpload {
                    filename: first.filename.clone(),
                    delivered: k,
                    expected,
                    cause: e.to_string(),
                });
            }
        }

        let arrived = self.find_in_inbox(&first.first_id, &first.filename, expected)?;
        if arrived.len() != expected {
            self.purge(&arrived);
            return Err(FsError::PartialUpload {
                filename: first.filename.clone(),
                delivered: arrived.len(),
                expected,
                cause: "messages missing from the inbox".into(),
            });
        }

        let mut moved = Vec::with_capacity(expected);
        for (i, handle) in arrived.iter().enumerate() {
            match self.transport.move_message(handle, dir) {
                Ok(h) => moved.push(h),
                Err(e) => {
                    self.purge(&moved);
                    self.purge(&arrived[i..]);
                    return Err(FsError::PartialUpload {
                        filename: first.filename.clone(),
                        delivered: i,
                        expected,
                        cause: e.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    fn append_chain(&mut self, chain: &[EmfsMessage], dir: &MailboxPath) -> Result<(), FsError> {
        let mut stored = Vec::with_capacity(chain.len());
        for (k, message) in chain.iter().enumerate() {
            match self.transport.append_message(dir, message) {
                Ok(h) => stored.push(h),
                Err(e) if k == 0 => return Err(e.into()),
                Err(e) => {
                    self.purge(&stored);
                    return Err(FsError::PartialUpload {
                        filename: message.filename.clone(),
                        delivered: k,
                        expected: chain.len(),
                        cause: e.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Inbox messages of one chain, polling until `want` have arrived or
    /// the attempts run out.
    fn find_in_inbox(
        &mut self,
        first_id: &IdHash,
        filename: &str,
        want: usize,
    ) -> Result<Vec<MessageHandle>, FsError> {
        let inbox = MailboxPath::inbox();
        let attempts = self.options.relocate_attempts.max(1);
        let mut found = Vec::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.options.relocate_delay);
            }
            found = self
                .transport
                .list_messages(&inbox)?
                .into_iter()
                .filter(|m| {
                    m.summary.as_ref().is_some_and(|s| {
                        s.headers.first_id == *first_id && s.headers.filename == filename
                    })
                })
                .map(|m| m.handle)
                .collect();
            if found.len() >= want {
                break;
            }
            debug!("{}/{want} chain messages in the inbox", found.len());
        }
        found.sort_by_key(|h| h.uid);
        Ok(found)
    }

    /// Best-effort removal of the messages of an abandoned upload.
    fn purge(&mut self, handles: &[MessageHandle]) {
        for h in handles {
            if let Err(e) = self.transport.delete_message(h) {
                warn!("could not remove {h}: {e}");
            }
        }
    }

    /// Reads `filename` from `dir` by walking its chain.
    pub fn get(&mut self, dir: &MailboxPath, filename: &str) -> Result<Vec<u8>, FsError> {
        let entry = self.lookup(dir, filename)?;
        let candidates = self.chain_candidates(dir, &entry)?;
        let mut walker = ChainWalker::new(&mut self.transport, filename, candidates);
        let mut bodies: Vec<EncodedText> = Vec::new();
        let mut expected = entry.first_id.clone();
        loop {
            let position = bodies.len();
            let Some((_, message)) = walker.resolve(position, &expected)? else {
                return Err(FsError::BrokenChain {
                    dir: dir.clone(),
                    filename: filename.to_owned(),
                    position,
                    missing: expected,
                    remaining: walker.remaining(),
                });
            };
            bodies.push(message.body);
            match message.next_id {
                NextId::End => break,
                NextId::Id(next) => expected = next,
            }
        }
        Ok(decode8(&EncodedText::concat(&bodies))?)
    }

    /// Deletes `filename` from `dir`, one link at a time from the head of
    /// the chain. Returns the number of messages removed.
    pub fn delete(&mut self, dir: &MailboxPath, filename: &str) -> Result<usize, FsError> {
        let entry = self.lookup(dir, filename)?;
        let candidates = self.chain_candidates(dir, &entry)?;
        let mut walker = ChainWalker::new(&mut self.transport, filename, candidates);
        let mut expected = entry.first_id.clone();
        let mut deleted = 0;
        let outcome = loop {
            match walker.resolve(deleted, &expected) {
                Err(e) => break Err(FsError::from(e)),
                Ok(None) => {
                    break Err(FsError::BrokenChain {
                        dir: dir.clone(),
                        filename: filename.to_owned(),
                        position: deleted,
                        missing: expected,
                        remaining: walker.remaining(),
                    })
                }
                Ok(Some((handle, message))) => {
                    if let Err(e) = walker.transport().delete_message(&handle) {
                        break Err(e.into());
                    }
                    deleted += 1;
                    match message.next_id {
                        NextId::End => break Ok(()),
                        NextId::Id(next) => expected = next,
                    }
                }
            }
        };
        let strays = walker.remaining();
        match outcome {
            Ok(()) => {
                for h in &strays {
                    warn!("removing stray message {h} of {filename:?}");
                }
                self.purge(&strays);
                self.index.remove_file(dir, filename);
                Ok(deleted)
            }
            Err(e) => {
                if let Err(re) = self.index.refresh_dir(&mut self.transport, dir) {
                    warn!("could not refresh {dir} after failed delete: {re}");
                }
                Err(e)
            }
        }
    }

    fn lookup(&self, dir: &MailboxPath, filename: &str) -> Result<FileEntry, FsError> {
        let listing = self
            .index
            .dir(dir)
            .ok_or_else(|| FsError::NoSuchFolder(dir.clone()))?;
        listing
            .file(filename)
            .cloned()
            .ok_or_else(|| FsError::NoSuchFile {
                dir: dir.clone(),
                filename: filename.to_owned(),
            })
    }

    /// Messages in `dir` whose subject names the chain of `entry`.
    fn chain_candidates(
        &mut self,
        dir: &MailboxPath,
        entry: &FileEntry,
    ) -> Result<Vec<MessageHandle>, FsError> {
        Ok(self
            .transport
            .list_messages(dir)?
            .into_iter()
            .filter(|m| {
                m.summary.as_ref().is_some_and(|s| {
                    s.headers.first_id == entry.first_id && s.headers.filename == entry.filename
                })
            })
            .map(|m| m.handle)
            .collect())
    }
}

fn root_path(options: &FsOptions) -> Result<MailboxPath, FsError> {
    MailboxPath::root(&options.root_folder)
        .map_err(|_| FsError::InvalidName(format!("bad root folder {:?}", options.root_folder)))
}

fn remove_tree<T: MailTransport>(
    transport: &mut T,
    dir: &MailboxPath,
    removed: &mut Vec<MailboxPath>,
) -> Result<(), FsError> {
    for child in transport.list_folders(dir)? {
        remove_tree(transport, &child, removed)?;
    }
    transport.delete_folder(dir)?;
    debug!("removed {dir}");
    removed.push(dir.clone());
    Ok(())
}
