#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use emfs::fs::{FsIndex, FsInstance, FsOptions};
use emfs::mock::{MockAccount, MockEsp, MockSession};

pub const ADDRESS: &str = "me@example.com";
pub const PASSWORD: &str = "hunter2";
pub const ROOT: &str = "EMFS";

/// Fresh simulated account with a mounted, empty filesystem.
pub fn mounted(size_limit: usize) -> (MockEsp, FsInstance<MockSession>) {
    let esp = MockEsp::new_account(ADDRESS, PASSWORD, size_limit as u64, true).unwrap();
    let fs = mount(&esp, size_limit);
    (esp, fs)
}

pub fn mount(esp: &MockEsp, size_limit: usize) -> FsInstance<MockSession> {
    let session = esp.login(ADDRESS, PASSWORD, true).unwrap();
    FsInstance::init(session, FsOptions::immediate(ROOT, size_limit, ADDRESS)).unwrap()
}

/// Chain length computed from the file size alone.
pub fn expected_chain_length(file_len: usize, size_limit: usize) -> usize {
    let encoded = 4 * file_len.div_ceil(3);
    encoded.div_ceil(size_limit).max(1)
}

/// Per-folder view: subfolder names and `filename -> (first id, messages, payload)`.
pub type Tree = BTreeMap<String, (BTreeSet<String>, BTreeMap<String, (String, u64, u64)>)>;

/// Reads the tree under the root straight out of the account state, by
/// splitting subjects and counting body characters.
pub fn brute_force_tree(account: &MockAccount, root: &str) -> Tree {
    let folders: Vec<&str> = account
        .folder_names()
        .filter(|f| *f == root || f.starts_with(&format!("{root}/")))
        .collect();
    let mut tree = Tree::new();
    for &folder in &folders {
        let prefix = format!("{folder}/");
        let subdirs = folders
            .iter()
            .filter_map(|f| f.strip_prefix(&prefix))
            .filter(|rest| !rest.contains('/'))
            .map(str::to_owned)
            .collect();
        let mut files: BTreeMap<String, (String, u64, u64)> = BTreeMap::new();
        for m in account.messages(folder).unwrap() {
            let (head, body) = m.wire.split_once("\r\n\r\n").unwrap();
            let subject = head
                .split("\r\n")
                .find_map(|l| l.strip_prefix("Subject: "))
                .unwrap();
            let (id, name) = subject.split_once(' ').unwrap();
            let payload = body.bytes().filter(|b| *b != b'\r' && *b != b'\n').count() as u64;
            let e = files
                .entry(name.to_owned())
                .or_insert_with(|| (id.to_owned(), 0, 0));
            assert_eq!(e.0, id, "two chains named {name} in {folder}");
            e.1 += 1;
            e.2 += payload;
        }
        tree.insert(folder.to_owned(), (subdirs, files));
    }
    tree
}

/// The same view taken from an index.
pub fn index_tree(index: &FsIndex) -> Tree {
    index
        .dirs()
        .map(|(path, listing)| {
            (
                path.to_string(),
                (
                    listing.subdirs().map(str::to_owned).collect(),
                    listing
                        .files()
                        .map(|f| {
                            (
                                f.filename.clone(),
                                (f.first_id.to_string(), f.chain_length, f.encoded_size),
                            )
                        })
                        .collect(),
                ),
            )
        })
        .collect()
}
