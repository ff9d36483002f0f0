mod common;

use common::{brute_force_tree, index_tree, mount, mounted, ADDRESS, PASSWORD, ROOT};
use emfs::codec::{encode8, pack, slice_encoded};
use emfs::fs::{FsError, FsInstance, FsOptions};
use emfs::mock::{FaultDirective, FaultScript, MockEsp};
use emfs::transport::TransportError;

fn wires(name: &str, data: &[u8], limit: usize) -> Vec<String> {
    pack(name, &slice_encoded(&encode8(data), limit), ADDRESS)
        .iter()
        .map(|m| m.to_wire())
        .collect()
}

fn distinct(n: usize) -> Vec<u8> {
    (0..n).map(|i| (i * 131 % 251) as u8).collect()
}

#[test]
fn foreign_messages_are_ignored() {
    let (esp, mut fs) = mounted(32);
    let root = fs.root().clone();
    fs.put(b"mine", &root, "mine.txt", false).unwrap();
    esp.inject_raw(ROOT, "From: someone@else\r\nSubject: hello\r\n\r\nhi\r\n")
        .unwrap();
    fs.build_index().unwrap();
    assert_eq!(fs.index().skipped().len(), 1);
    let (files, _) = fs.list_dir(&root).unwrap();
    assert_eq!(files.len(), 1);
    assert_eq!(fs.get(&root, "mine.txt").unwrap(), b"mine");
}

#[test]
fn out_of_order_storage_still_reads() {
    let (esp, mut fs) = mounted(16);
    let data = distinct(100);
    for wire in wires("rev.bin", &data, 16).iter().rev() {
        esp.inject_raw(ROOT, wire).unwrap();
    }
    fs.build_index().unwrap();
    let root = fs.root().clone();
    assert_eq!(fs.get(&root, "rev.bin").unwrap(), data);
    assert_eq!(fs.delete(&root, "rev.bin").unwrap(), 9);
    assert_eq!(esp.message_count(ROOT), Some(0));
}

#[test]
fn corrupted_body_breaks_the_chain() {
    let (esp, mut fs) = mounted(16);
    let root = fs.root().clone();
    fs.put(&distinct(60), &root, "c.bin", false).unwrap();
    let uids: Vec<u64> = esp
        .account()
        .messages(ROOT)
        .unwrap()
        .iter()
        .map(|m| m.uid)
        .collect();
    esp.set_faults(FaultScript::new().then(FaultDirective::CorruptMessage(uids[2])));
    match fs.get(&root, "c.bin") {
        Err(FsError::BrokenChain {
            position,
            remaining,
            ..
        }) => {
            assert_eq!(position, 2);
            assert_eq!(remaining.len(), uids.len() - 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn duplicate_chains_keep_the_oldest() {
    let (esp, mut fs) = mounted(64);
    let root = fs.root().clone();
    fs.put(b"old", &root, "same", false).unwrap();
    for wire in wires("same", b"newer upload", 64) {
        esp.inject_raw(ROOT, &wire).unwrap();
    }
    fs.build_index().unwrap();
    assert_eq!(fs.get(&root, "same").unwrap(), b"old");
    assert_eq!(fs.index().skipped().len(), 1);
}

#[test]
fn delete_sweeps_stray_copies() {
    let (esp, mut fs) = mounted(16);
    let root = fs.root().clone();
    fs.put(&distinct(40), &root, "s.bin", false).unwrap();
    let copy = esp.account().messages(ROOT).unwrap()[1].wire.clone();
    esp.inject_raw(ROOT, &copy).unwrap();
    fs.build_index().unwrap();
    assert_eq!(fs.delete(&root, "s.bin").unwrap(), 4);
    assert_eq!(esp.message_count(ROOT), Some(0));
    assert!(fs.index().file(&root, "s.bin").is_none());
}

#[test]
fn put_into_missing_directory() {
    let (_, mut fs) = mounted(64);
    let nowhere = fs.resolve("nowhere").unwrap();
    assert!(matches!(
        fs.put(b"x", &nowhere, "x", false),
        Err(FsError::NoSuchFolder(_))
    ));
    assert!(matches!(
        fs.get(&nowhere, "x"),
        Err(FsError::NoSuchFolder(_))
    ));
    assert!(matches!(
        fs.list_dir(&nowhere),
        Err(FsError::NoSuchFolder(_))
    ));
}

#[test]
fn bad_filenames_are_rejected() {
    let (_, mut fs) = mounted(64);
    let root = fs.root().clone();
    for name in ["", "a/b", "..", " lead", "tab\there"] {
        assert!(
            matches!(
                fs.put(b"x", &root, name, false),
                Err(FsError::InvalidName(_))
            ),
            "{name:?}"
        );
    }
}

#[test]
fn state_survives_a_snapshot() {
    let (esp, mut fs) = mounted(24);
    let dir = fs.resolve("keep/this").unwrap();
    fs.mkdir(&dir).unwrap();
    fs.put(&distinct(200), &dir, "kept.bin", false).unwrap();
    let restored = MockEsp::from_snapshot(&esp.snapshot()).unwrap();
    let session = restored.login(ADDRESS, PASSWORD, true).unwrap();
    let mut reopened = FsInstance::open(session, FsOptions::immediate(ROOT, 24, ADDRESS)).unwrap();
    assert_eq!(reopened.index(), fs.index());
    assert_eq!(reopened.get(&dir, "kept.bin").unwrap(), distinct(200));
}

#[test]
fn removing_the_root_empties_the_index() {
    let (esp, mut fs) = mounted(64);
    let root = fs.root().clone();
    let sub = fs.resolve("sub").unwrap();
    fs.mkdir(&sub).unwrap();
    fs.put(b"gone", &root, "f", false).unwrap();
    assert_eq!(fs.rmdir(&root).unwrap(), vec![sub, root.clone()]);
    assert_eq!(fs.index().dirs().count(), 0);
    assert!(matches!(
        fs.mkdir(&root.child("x").unwrap()),
        Err(FsError::NoSuchFolder(_))
    ));
    assert_eq!(fs.build_index().unwrap().dirs().count(), 0);
    let session = fs.into_transport();
    assert!(matches!(
        FsInstance::open(session, FsOptions::immediate(ROOT, 64, ADDRESS)),
        Err(FsError::NoSuchFolder(_))
    ));
    let again = mount(&esp, 64);
    assert!(again.root_created());
}

#[test]
fn failed_send_midway_cleans_up() {
    let (esp, mut fs) = mounted(16);
    let root = fs.root().clone();
    // the first three sends go through, the fourth fails
    esp.set_faults(FaultScript::new().then(FaultDirective::FailAfter(3)));
    let err = fs.put(&distinct(100), &root, "f.bin", false).unwrap_err();
    match err {
        FsError::PartialUpload {
            delivered,
            expected,
            ..
        } => {
            assert_eq!((delivered, expected), (3, 9));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(esp.message_count("INBOX"), Some(0));
    assert_eq!(esp.message_count(ROOT), Some(0));
    assert_eq!(
        index_tree(fs.index()),
        brute_force_tree(&esp.account(), ROOT)
    );
}

#[test]
fn failed_first_send_reports_the_transport_error() {
    let (esp, mut fs) = mounted(16);
    let root = fs.root().clone();
    esp.set_faults(FaultScript::new().then(FaultDirective::FailAfter(0)));
    assert!(matches!(
        fs.put(b"x", &root, "x", false),
        Err(FsError::Transport(TransportError::FaultInjected(_)))
    ));
    assert_eq!(esp.message_count("INBOX"), Some(0));
}

#[test]
fn refused_tls_fails_the_login() {
    let esp = MockEsp::new_account(ADDRESS, PASSWORD, 64, true).unwrap();
    esp.set_faults(FaultScript::new().then(FaultDirective::RefuseTls));
    assert_eq!(
        esp.login(ADDRESS, PASSWORD, true).unwrap_err(),
        TransportError::TlsUnavailable
    );
    assert!(esp.login(ADDRESS, PASSWORD, true).is_ok());
    let plain_only = MockEsp::new_account(ADDRESS, PASSWORD, 64, false).unwrap();
    assert_eq!(
        plain_only.login(ADDRESS, PASSWORD, true).unwrap_err(),
        TransportError::TlsUnavailable
    );
}
