//! The SMTP/IMAP client driven over real sockets against the simulated
//! provider.

mod common;

use common::{brute_force_tree, index_tree, ADDRESS, PASSWORD, ROOT};
use emfs::codec::{pack, slice_encoded, EncodedText};
use emfs::fs::{Delivery, FsError, FsInstance, FsOptions};
use emfs::mock::{serve, MockEsp, ShimHandle};
use emfs::net::NetSession;
use emfs::transport::{Endpoint, MailTransport, MailboxPath, ProviderProfile, TransportError};

fn start(size_limit: u64) -> (MockEsp, ShimHandle, ProviderProfile) {
    let esp = MockEsp::new_account(ADDRESS, PASSWORD, size_limit, true).unwrap();
    let shim = serve(esp.clone()).unwrap();
    let profile = ProviderProfile {
        smtp_endpoint: Endpoint::new("127.0.0.1", shim.smtp_addr.port()),
        imap_endpoint: Endpoint::new("127.0.0.1", shim.imap_addr.port()),
        username: ADDRESS.into(),
        address: ADDRESS.into(),
        credential_ref: "UNUSED".into(),
        size_limit_s: size_limit,
        root_folder: ROOT.into(),
        use_tls: false,
    };
    (esp, shim, profile)
}

fn mount(profile: &ProviderProfile) -> FsInstance<NetSession> {
    let session = NetSession::connect(profile, PASSWORD).unwrap();
    let options = FsOptions::immediate(ROOT, profile.size_limit_s as usize, ADDRESS);
    FsInstance::init(session, options).unwrap()
}

#[test]
fn login_failures() {
    let (_esp, _shim, mut profile) = start(64);
    assert!(matches!(
        NetSession::connect(&profile, "wrong"),
        Err(TransportError::AuthFailed)
    ));
    profile.use_tls = true;
    assert!(matches!(
        NetSession::connect(&profile, PASSWORD),
        Err(TransportError::TlsUnavailable)
    ));
    profile.use_tls = false;
    let session = NetSession::connect(&profile, PASSWORD).unwrap();
    assert!(!session.is_encrypted());
}

#[test]
fn file_lifecycle_over_sockets() {
    let (esp, _shim, profile) = start(64);
    let mut fs = mount(&profile);
    let root = fs.root().clone();
    let docs = fs.resolve("docs/2024").unwrap();
    assert_eq!(fs.mkdir(&docs).unwrap().len(), 2);

    let data: Vec<u8> = (0..=255u8).cycle().take(1000).collect();
    let entry = fs.put(&data, &docs, "bytes.bin", false).unwrap();
    assert_eq!(entry.chain_length, 21);
    fs.put(b"", &root, "empty", false).unwrap();
    assert_eq!(esp.message_count("EMFS/docs/2024"), Some(21));
    assert_eq!(esp.message_count("INBOX"), Some(0));

    assert_eq!(fs.get(&docs, "bytes.bin").unwrap(), data);
    assert_eq!(fs.get(&root, "empty").unwrap(), b"");

    // a fresh session indexes what the first one wrote
    let other = mount(&profile);
    assert_eq!(other.index(), fs.index());
    assert_eq!(
        index_tree(other.index()),
        brute_force_tree(&esp.account(), ROOT)
    );
    other.close().unwrap();

    assert_eq!(fs.delete(&docs, "bytes.bin").unwrap(), 21);
    assert_eq!(esp.message_count("EMFS/docs/2024"), Some(0));
    let top = fs.resolve("docs").unwrap();
    assert_eq!(fs.rmdir(&top).unwrap(), vec![docs, top]);
    let folders: Vec<String> = esp.account().folder_names().map(str::to_owned).collect();
    assert_eq!(folders, ["EMFS", "INBOX"]);
    fs.close().unwrap();
}

#[test]
fn non_ascii_folder_names_roundtrip() {
    let (esp, _shim, profile) = start(1024);
    let mut fs = mount(&profile);
    let dir = fs.resolve("Résumé/日本").unwrap();
    fs.mkdir(&dir).unwrap();
    fs.put(b"cv", &dir, "cv.txt", false).unwrap();
    // the server only ever sees modified UTF-7
    assert!(esp.account().folder_names().all(|f| f.is_ascii()));

    let mut again = mount(&profile);
    let (files, _) = again.list_dir(&dir).unwrap();
    assert_eq!(files[0].filename, "cv.txt");
    assert_eq!(again.get(&dir, "cv.txt").unwrap(), b"cv");
    let (_, subdirs) = again.list_dir(again.root()).unwrap();
    assert_eq!(subdirs, ["Résumé"]);
}

#[test]
fn size_cap_is_enforced_on_both_paths() {
    let (_esp, _shim, profile) = start(64);
    let mut session = NetSession::connect(&profile, PASSWORD).unwrap();
    let dir = MailboxPath::root(ROOT).unwrap();
    session.create_folder(&dir).unwrap();
    for (len, ok) in [(64, true), (65, false)] {
        let body = EncodedText::parse(&"Q".repeat(len)).unwrap();
        let msg = pack("edge", &slice_encoded(&body, len), ADDRESS).remove(0);
        let sent = session.send_message(&msg);
        let appended = session.append_message(&dir, &msg).map(|_| ());
        for r in [sent, appended] {
            match r {
                Ok(()) => assert!(ok),
                Err(TransportError::MessageTooLarge { .. }) => assert!(!ok),
                Err(e) => panic!("{len}: {e}"),
            }
        }
    }
}

#[test]
fn direct_append_over_imap() {
    let (esp, _shim, profile) = start(32);
    let session = NetSession::connect(&profile, PASSWORD).unwrap();
    let mut options = FsOptions::immediate(ROOT, 32, ADDRESS);
    options.delivery = Delivery::DirectAppend;
    let mut fs = FsInstance::init(session, options).unwrap();
    let root = fs.root().clone();
    fs.put(b"stored without the inbox!!", &root, "a", false)
        .unwrap();
    assert_eq!(esp.message_count(ROOT), Some(2));
    assert_eq!(fs.get(&root, "a").unwrap(), b"stored without the inbox!!");
    assert!(matches!(
        fs.put(b"again", &root, "a", false),
        Err(FsError::FileExists { .. })
    ));
}

#[test]
fn missing_folder_errors() {
    let (_esp, _shim, profile) = start(64);
    let session = NetSession::connect(&profile, PASSWORD).unwrap();
    let options = FsOptions::immediate(ROOT, 64, ADDRESS);
    assert!(matches!(
        FsInstance::open(session, options),
        Err(FsError::NoSuchFolder(_))
    ));
    let mut session = NetSession::connect(&profile, PASSWORD).unwrap();
    let orphan = "EMFS/a/b".parse::<MailboxPath>().unwrap();
    assert!(session.create_folder(&orphan).is_err());
    assert!(matches!(
        session.list_messages(&orphan),
        Err(TransportError::NoSuchFolder(_))
    ));
}
