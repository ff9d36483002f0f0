use std::collections::{BTreeMap, BTreeSet};

use log::warn;

use crate::codec::{hash_id, parse_message, EmfsMessage, IdHash};
use crate::transport::{MailTransport, MessageHandle, TransportError};

/// Resolves chain links among the messages of one folder that share a
/// first id-hash.
///
/// Messages carry no header naming their own id, so a link is found by
/// fetching candidates and recomputing `hash_id(filename, position, body)`.
/// Candidates are tried in uid order starting at the expected position,
/// which finds in-order chains with one fetch per link.
pub(crate) struct ChainWalker<'a, T: MailTransport + ?Sized> {
    transport: &'a mut T,
    filename: &'a str,
    candidates: Vec<MessageHandle>,
    fetched: BTreeMap<u64, Option<EmfsMessage>>,
    used: BTreeSet<u64>,
}

impl<'a, T: MailTransport + ?Sized> ChainWalker<'a, T> {
    pub(crate) fn new(
        transport: &'a mut T,
        filename: &'a str,
        mut candidates: Vec<MessageHandle>,
    ) -> Self {
        candidates.sort_by_key(|h| h.uid);
        Self {
            transport,
            filename,
            candidates,
            fetched: BTreeMap::new(),
            used: BTreeSet::new(),
        }
    }

    fn load(&mut self, handle: &MessageHandle) -> Result<Option<&EmfsMessage>, TransportError> {
        if !self.fetched.contains_key(&handle.uid) {
            let parsed = match self.transport.fetch_message(handle) {
                Ok(raw) => match parse_message(&raw) {
                    Ok(m) => Some(m),
                    Err(e) => {
                        warn!("unreadable chain message {handle}: {e}");
                        None
                    }
                },
                Err(TransportError::NoSuchMessage(_)) => None,
                Err(e) => return Err(e),
            };
            self.fetched.insert(handle.uid, parsed);
        }
        Ok(self.fetched[&handle.uid].as_ref())
    }

    /// Finds the unused message whose body hashes to `id` at `position`.
    pub(crate) fn resolve(
        &mut self,
        position: usize,
        id: &IdHash,
    ) -> Result<Option<(MessageHandle, EmfsMessage)>, TransportError> {
        let n = self.candidates.len();
        for k in 0..n {
            let handle = self.candidates[(position + k) % n].clone();
            if self.used.contains(&handle.uid) {
                continue;
            }
            let filename = self.filename;
            let hit = match self.load(&handle)? {
                Some(m) => m.filename == filename && hash_id(filename, position, &m.body) == *id,
                None => false,
            };
            if hit {
                self.used.insert(handle.uid);
                let message = self.fetched[&handle.uid].clone().expect("loaded");
                return Ok(Some((handle, message)));
            }
        }
        Ok(None)
    }

    /// Candidates not consumed by the walk so far.
    pub(crate) fn remaining(&self) -> Vec<MessageHandle> {
        self.candidates
            .iter()
            .filter(|h| !self.used.contains(&h.uid))
            .cloned()
            .collect()
    }

    pub(crate) fn transport(&mut self) -> &mut T {
        self.transport
    }
}
