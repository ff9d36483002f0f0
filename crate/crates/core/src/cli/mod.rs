//! The `emfs` command line.
//!
//! [`run`] takes the arguments and an environment lookup and returns the
//! exit code with everything that would have been printed, so sessions can
//! be scripted and compared in tests.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::LevelFilter;

use crate::fs::{FsError, FsInstance, FsOptions};
use crate::mock::MockEsp;
use crate::net::NetSession;
use crate::transport::{MailTransport, MailboxPath, ProviderProfile, TransportError, DELIMITER};
use config::parse_profile;

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const NO_SUCH_FILE: i32 = 3;
    pub const NO_SUCH_FOLDER: i32 = 4;
    pub const EXISTS: i32 = 5;
    pub const BROKEN_CHAIN: i32 = 6;
    pub const PARTIAL_UPLOAD: i32 = 7;
    pub const TOO_LARGE: i32 = 8;
    pub const BAD_INPUT: i32 = 9;
    pub const TRANSPORT: i32 = 10;
}

#[derive(Debug, Parser)]
#[command(name = "emfs", version, about = "Store files in an email account")]
struct Cli {
    /// Profile file.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Run against a simulated provider persisted in this snapshot file.
    #[arg(long, value_name = "SNAPSHOT")]
    mock: Option<PathBuf>,
    /// Log protocol and chain activity to stderr.
    #[arg(long, short = 'v')]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create the root folder if it does not exist.
    Init,
    /// Create a directory and any missing parents.
    Mkdir { path: String },
    /// Remove a directory with everything in it.
    Rmdir { path: String },
    /// Upload a local file into a directory.
    Put {
        local: PathBuf,
        /// Destination directory.
        #[arg(default_value = "")]
        dir: String,
        /// Name to store the file under, defaults to the local file name.
        #[arg(long)]
        name: Option<String>,
        /// Replace an existing file of the same name.
        #[arg(long)]
        overwrite: bool,
    },
    /// Download a file.
    Get { remote: String, local: PathBuf },
    /// Delete a file.
    Rm { remote: String },
    /// List a directory.
    Ls {
        #[arg(default_value = "")]
        path: String,
    },
    /// Rebuild the index and summarize it.
    Index,
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Failure of an invocation, with its exit code.
struct Failure {
    class: &'static str,
    message: String,
    code: i32,
}

impl Failure {
    fn bad_input(class: &'static str, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
            code: exit::BAD_INPUT,
        }
    }
}

impl From<FsError> for Failure {
    fn from(e: FsError) -> Self {
        let class = e.class();
        let code = match class {
            "NoSuchFile" => exit::NO_SUCH_FILE,
            "NoSuchFolder" => exit::NO_SUCH_FOLDER,
            "FileExists" | "AlreadyExists" => exit::EXISTS,
            "BrokenChain" => exit::BROKEN_CHAIN,
            "PartialUpload" => exit::PARTIAL_UPLOAD,
            "MessageTooLarge" => exit::TOO_LARGE,
            "InvalidName" | "MissingCredential" => exit::BAD_INPUT,
            _ => exit::TRANSPORT,
        };
        Self {
            class,
            message: e.to_string(),
            code,
        }
    }
}

impl From<TransportError> for Failure {
    fn from(e: TransportError) -> Self {
        FsError::Transport(e).into()
    }
}

/// Runs one command. `args` includes the program name.
pub fn run<I, S>(args: I, env: &dyn Fn(&str) -> Option<String>) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code,
                    stderr: text,
                    ..Outcome::default()
                }
            } else {
                Outcome {
                    code,
                    stdout: text,
                    ..Outcome::default()
                }
            };
        }
    };
    if cli.verbose {
        log::set_max_level(LevelFilter::Debug);
    }
    let mut out = Outcome::default();
    if let Err(f) = execute(&cli, env, &mut out.stdout) {
        out.code = f.code;
        let _ = writeln!(out.stderr, "error[{}]: {}", f.class, f.message);
    }
    out
}

fn execute(
    cli: &Cli,
    env: &dyn Fn(&str) -> Option<String>,
    out: &mut String,
) -> Result<(), Failure> {
    let profile = load_profile(cli, env)?;
    let password = profile.credential_with(env)?;
    match &cli.mock {
        Some(snapshot) => {
            let esp = load_mock(snapshot, &profile, &password)?;
            let result = esp
                .connect(&profile, &password)
                .map_err(Failure::from)
                .and_then(|session| {
                    let options = FsOptions::immediate(
                        &profile.root_folder,
                        usize::try_from(profile.size_limit_s).unwrap_or(usize::MAX),
                        &profile.address,
                    );
                    dispatch(&cli.command, session, options, out)
                });
            fs::write(snapshot, esp.snapshot()).map_err(|e| {
                Failure::bad_input(
                    "LocalIo",
                    format!("cannot write {}: {e}", snapshot.display()),
                )
            })?;
            result
        }
        None => {
            let session = NetSession::connect(&profile, &password)?;
            dispatch(
                &cli.command,
                session,
                FsOptions::from_profile(&profile),
                out,
            )
        }
    }
}

fn load_profile(
    cli: &Cli,
    env: &dyn Fn(&str) -> Option<String>,
) -> Result<ProviderProfile, Failure> {
    let path = cli
        .config
        .clone()
        .or_else(|| env("EMFS_CONFIG").map(PathBuf::from))
        .ok_or_else(|| Failure::bad_input("BadConfig", "no profile given; pass --config"))?;
    let text = fs::read_to_string(&path).map_err(|e| {
        Failure::bad_input("BadConfig", format!("cannot read {}: {e}", path.display()))
    })?;
    parse_profile(&text)
        .map_err(|e| Failure::bad_input("BadConfig", format!("{}: {e}", path.display())))
}

/// Loads the simulated account, creating a fresh one when the snapshot
/// file does not exist yet.
fn load_mock(path: &Path, profile: &ProviderProfile, password: &str) -> Result<MockEsp, Failure> {
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| {
            Failure::bad_input("LocalIo", format!("cannot read {}: {e}", path.display()))
        })?;
        MockEsp::from_snapshot(&text)
            .map_err(|e| Failure::bad_input("BadSnapshot", format!("{}: {e}", path.display())))
    } else {
        MockEsp::new_account(&profile.address, password, profile.size_limit_s, true)
            .map_err(|e| Failure::bad_input("BadConfig", e.to_string()))
    }
}

fn dispatch<T: MailTransport>(
    command: &Command,
    transport: T,
    options: FsOptions,
    out: &mut String,
) -> Result<(), Failure> {
    if let Command::Init = command {
        let root = options.root_folder.clone();
        let fs = FsInstance::init(transport, options)?;
        if fs.root_created() {
            let _ = writeln!(out, "created root {root}");
        } else {
            let _ = writeln!(out, "root {root} already exists");
        }
        fs.close()?;
        return Ok(());
    }

    let mut fs = FsInstance::open(transport, options)?;
    match command {
        Command::Init => unreachable!("handled above"),
        Command::Mkdir { path } => {
            let dir = fs.resolve(path)?;
            let created = fs.mkdir(&dir)?;
            if created.is_empty() {
                let _ = writeln!(out, "{dir} already exists");
            }
            for d in created {
                let _ = writeln!(out, "created {d}");
            }
        }
        Command::Rmdir { path } => {
            let dir = fs.resolve(path)?;
            for d in fs.rmdir(&dir)? {
                let _ = writeln!(out, "removed {d}");
            }
        }
        Command::Put {
            local,
            dir,
            name,
            overwrite,
        } => {
            let filename = match name {
                Some(n) => n.clone(),
                None => local
                    .file_name()
                    .and_then(|n| n.to_str())
                    .map(str::to_owned)
                    .ok_or_else(|| {
                        Failure::bad_input(
                            "InvalidName",
                            format!("{} has no usable file name", local.display()),
                        )
                    })?,
            };
            let data = fs::read(local).map_err(|e| {
                Failure::bad_input("LocalIo", format!("cannot read {}: {e}", local.display()))
            })?;
            let dir = fs.resolve(dir)?;
            let entry = fs.put(&data, &dir, &filename, *overwrite)?;
            let _ = writeln!(
                out,
                "stored {dir}/{filename}: {} message(s), {} octets encoded",
                entry.chain_length, entry.encoded_size
            );
        }
        Command::Get { remote, local } => {
            let (dir, filename) = split_remote(&fs, remote)?;
            let data = fs.get(&dir, &filename)?;
            fs::write(local, &data).map_err(|e| {
                Failure::bad_input("LocalIo", format!("cannot write {}: {e}", local.display()))
            })?;
            let _ = writeln!(out, "fetched {dir}/{filename}: {} bytes", data.len());
        }
        Command::Rm { remote } => {
            let (dir, filename) = split_remote(&fs, remote)?;
            let n = fs.delete(&dir, &filename)?;
            let _ = writeln!(out, "deleted {dir}/{filename}: {n} message(s)");
        }
        Command::Ls { path } => {
            let dir = fs.resolve(path)?;
            let (files, subdirs) = fs.list_dir(&dir)?;
            for d in subdirs {
                let _ = writeln!(out, "d\t{d}/");
            }
            for f in files {
                let _ = writeln!(
                    out,
                    "f\t{}\t{}\t{}",
                    f.filename, f.chain_length, f.encoded_size
                );
            }
        }
        Command::Index => {
            let index = fs.build_index()?;
            let (mut dirs, mut files, mut messages) = (0, 0, 0);
            for (_, listing) in index.dirs() {
                dirs += 1;
                files += listing.files().count();
                messages += listing.message_count();
            }
            let _ = writeln!(
                out,
                "{dirs} directories, {files} files, {messages} messages"
            );
            for s in index.skipped() {
                let _ = writeln!(out, "skipped {}: {}", s.handle, s.reason);
            }
        }
    }
    fs.close()?;
    Ok(())
}

/// Splits `dir/name` into a folder under the root and a filename.
fn split_remote<T: MailTransport>(
    fs: &FsInstance<T>,
    remote: &str,
) -> Result<(MailboxPath, String), Failure> {
    let trimmed = remote.trim_start_matches(DELIMITER);
    let (dir, name) = trimmed.rsplit_once(DELIMITER).unwrap_or(("", trimmed));
    if name.is_empty() {
        return Err(Failure::bad_input(
            "InvalidName",
            format!("{remote:?} names no file"),
        ));
    }
    Ok((fs.resolve(dir)?, name.to_owned()))
}
