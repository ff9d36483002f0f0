use std::collections::{BTreeMap, BTreeSet};
use std::time::SystemTime;

use log::warn;

use crate::codec::IdHash;
use crate::transport::{ListedMessage, MailTransport, MailboxPath, MessageHandle, TransportError};

/// One file as seen from its folder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileEntry {
    pub filename: String,
    pub first_id: IdHash,
    /// Messages in the chain, at least one.
    pub chain_length: u64,
    /// Base-64 payload octets across the whole chain.
    pub encoded_size: u64,
}

/// Cached view of one folder.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirListing {
    files: BTreeMap<String, FileEntry>,
    subdirs: BTreeSet<String>,
}

impl DirListing {
    pub fn files(&self) -> impl Iterator<Item = &FileEntry> {
        self.files.values()
    }

    pub fn file(&self, name: &str) -> Option<&FileEntry> {
        self.files.get(name)
    }

    pub fn subdirs(&self) -> impl Iterator<Item = &str> {
        self.subdirs.iter().map(String::as_str)
    }

    /// Messages this folder should hold: the sum of its chain lengths.
    pub fn message_count(&self) -> u64 {
        self.files.values().map(|f| f.chain_length).sum()
    }
}

/// A message the index left out, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedMessage {
    pub handle: MessageHandle,
    pub reason: String,
}

/// Directory tree with per-file chain summaries, rebuilt at session start
/// and patched by every mutating operation.
///
/// Equality compares directory contents only.
#[derive(Debug, Clone)]
pub struct FsIndex {
    dirs: BTreeMap<MailboxPath, DirListing>,
    built_at: SystemTime,
    skipped: Vec<SkippedMessage>,
}

impl PartialEq for FsIndex {
    fn eq(&self, other: &Self) -> bool {
        self.dirs == other.dirs
    }
}

impl Eq for FsIndex {}

impl FsIndex {
    pub fn empty() -> Self {
        Self {
            dirs: BTreeMap::new(),
            built_at: SystemTime::now(),
            skipped: Vec::new(),
        }
    }

    /// Walks the folder tree under `root` and summarizes every chain.
    pub fn build(
        transport: &mut impl MailTransport,
        root: &MailboxPath,
    ) -> Result<Self, TransportError> {
        let mut index = Self::empty();
        let mut pending = vec![root.clone()];
        while let Some(dir) = pending.pop() {
            let children = transport.list_folders(&dir)?;
            let listed = transport.list_messages(&dir)?;
            let mut listing = DirListing::default();
            for child in &children {
                listing.subdirs.insert(child.name().to_owned());
            }
            index.skipped.extend(group_chains(listed, &mut listing));
            index.dirs.insert(dir, listing);
            pending.extend(children);
        }
        Ok(index)
    }

    pub fn built_at(&self) -> SystemTime {
        self.built_at
    }

    pub fn skipped(&self) -> &[SkippedMessage] {
        &self.skipped
    }

    pub fn dir(&self, path: &MailboxPath) -> Option<&DirListing> {
        self.dirs.get(path)
    }

    pub fn contains_dir(&self, path: &MailboxPath) -> bool {
        self.dirs.contains_key(path)
    }

    pub fn dirs(&self) -> impl Iterator<Item = (&MailboxPath, &DirListing)> {
        self.dirs.iter()
    }

    pub fn file(&self, dir: &MailboxPath, name: &str) -> Option<&FileEntry> {
        self.dirs.get(dir)?.files.get(name)
    }

    pub(crate) fn add_dir(&mut self, path: &MailboxPath) {
        if let Some(parent) = path.parent() {
            if let Some(p) = self.dirs.get_mut(&parent) {
                p.subdirs.insert(path.name().to_owned());
            }
        }
        self.dirs.entry(path.clone()).or_default();
    }

    pub(crate) fn remove_tree(&mut self, path: &MailboxPath) {
        self.dirs.retain(|p, _| !p.starts_with(path));
        if let Some(parent) = path.parent() {
            if let Some(p) = self.dirs.get_mut(&parent) {
                p.subdirs.remove(path.name());
            }
        }
    }

    pub(crate) fn insert_file(&mut self, dir: &MailboxPath, entry: FileEntry) {
        if let Some(d) = self.dirs.get_mut(dir) {
            d.files.insert(entry.filename.clone(), entry);
        }
    }

    pub(crate) fn remove_file(&mut self, dir: &MailboxPath, name: &str) -> Option<FileEntry> {
        self.dirs.get_mut(dir)?.files.remove(name)
    }

    /// Re-reads the file entries of one folder from the server.
    pub(crate) fn refresh_dir(
        &mut self,
        transport: &mut impl MailTransport,
        dir: &MailboxPath,
    ) -> Result<(), TransportError> {
        let listed = transport.list_messages(dir)?;
        let mut listing = DirListing {
            files: BTreeMap::new(),
            subdirs: self
                .dirs
                .get(dir)
                .map(|d| d.subdirs.clone())
                .unwrap_or_default(),
        };
        self.skipped.retain(|s| s.handle.mailbox != *dir);
        let skipped = group_chains(listed, &mut listing);
        self.skipped.extend(skipped);
        self.dirs.insert(dir.clone(), listing);
        Ok(())
    }
}

/// Groups a folder's messages into chains by the first token of their
/// subject. Returns the messages that could not be attributed to a file.
fn group_chains(listed: Vec<ListedMessage>, listing: &mut DirListing) -> Vec<SkippedMessage> {
    let mut skipped = Vec::new();
    // first-id → (filename, handles, payload)
    let mut groups: BTreeMap<IdHash, (String, Vec<MessageHandle>, u64)> = BTreeMap::new();
    for m in listed {
        let Some(summary) = m.summary else {
            warn!("skipping non-EMFS message {}", m.handle);
            skipped.push(SkippedMessage {
                handle: m.handle,
                reason: "not an EMFS message".into(),
            });
            continue;
        };
        let h = summary.headers;
        let group = groups
            .entry(h.first_id.clone())
            .or_insert_with(|| (h.filename.clone(), Vec::new(), 0));
        if group.0 != h.filename {
            warn!(
                "message {} disagrees on the filename of chain {}",
                m.handle, h.first_id
            );
            skipped.push(SkippedMessage {
                handle: m.handle,
                reason: format!("chain {} belongs to {:?}", h.first_id, group.0),
            });
            continue;
        }
        group.1.push(m.handle);
        group.2 += summary.payload_octets;
    }
    // a name uploaded twice keeps the chain seen first
    let mut ordered: Vec<_> = groups.into_iter().collect();
    ordered.sort_by_key(|(_, (_, handles, _))| handles.iter().map(|h| h.uid).min());
    for (first_id, (filename, handles, payload)) in ordered {
        if listing.files.contains_key(&filename) {
            warn!("duplicate chain {first_id} for {filename:?}");
            skipped.extend(handles.into_iter().map(|handle| SkippedMessage {
                handle,
                reason: format!("duplicate chain for {filename:?}"),
            }));
            continue;
        }
        listing.files.insert(
            filename.clone(),
            FileEntry {
                filename,
                first_id,
                chain_length: handles.len() as u64,
                encoded_size: payload,
            },
        );
    }
    skipped
}
