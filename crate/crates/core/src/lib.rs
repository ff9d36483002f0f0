//! EMFS keeps a directory tree of files in an ordinary email account.
//!
//! Each file becomes a chain of self-addressed messages filed in an IMAP
//! folder: the base-64 text of the file is cut into slices no larger than
//! the provider's message limit and every message names the SHA-256
//! id-hash of the next. Directories are folders under a single root.
//!
//! * [`codec`] encodes, slices, hashes and (un)packs messages.
//! * [`transport`] defines the mail verbs the filesystem needs.
//! * [`net`] speaks SMTP and IMAP to a real provider.
//! * [`mock`] simulates a provider in process, with fault injection.
//! * [`fs`] implements the filesystem operations and the index.
//! * [`cli`] is the `emfs` command.

pub mod cli;
pub mod codec;
pub mod fs;
pub mod mock;
pub mod net;
pub mod transport;
