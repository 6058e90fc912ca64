use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::state::{StateKey, StateRead, Version};
use crate::codec;
use crate::crypto::Digest;

/// Versioned reads and proposed writes produced by simulated execution.
/// Both lists are sorted by key and free of duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadWriteSet {
    pub reads: Vec<(StateKey, Option<Version>)>,
    pub writes: Vec<(StateKey, Option<Vec<u8>>)>,
}

impl ReadWriteSet {
    pub fn digest(&self) -> Digest {
        Digest::of(&codec::encode(self))
    }

    pub fn is_well_formed(&self) -> bool {
        self.reads.windows(2).all(|w| w[0].0 < w[1].0)
            && self.writes.windows(2).all(|w| w[0].0 < w[1].0)
    }

    /// Every read still sees the version recorded at endorsement.
    pub fn reads_current(&self, state: &dyn StateRead) -> bool {
        self.reads.iter().all(|(k, v)| state.version(k) == *v)
    }
}

/// Execution context handed to transaction validators. Reads go to the
/// underlying state (or to earlier writes of the same transaction) and are
/// recorded with their versions; writes are buffered.
pub struct TxContext<'a> {
    state: &'a dyn StateRead,
    reads: BTreeMap<StateKey, Option<Version>>,
    writes: BTreeMap<StateKey, Option<Vec<u8>>>,
}

impl<'a> TxContext<'a> {
    pub fn new(state: &'a dyn StateRead) -> Self {
        TxContext {
            state,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
        }
    }

    pub fn height(&self) -> u64 {
        self.state.height()
    }

    pub fn get(&mut self, key: &[u8]) -> Option<Vec<u8>> {
        if let Some(w) = self.writes.get(key) {
            return w.clone();
        }
        let found = self.state.read(key);
        self.reads
            .entry(key.to_vec())
            .or_insert(found.map(|(_, v)| v));
        found.map(|(v, _)| v.to_vec())
    }

    pub fn exists(&mut self, key: &[u8]) -> bool {
        self.get(key).is_some()
    }

    /// Decode a stored value. Undecodable values read as absent.
    pub fn get_as<T: DeserializeOwned>(&mut self, key: &[u8]) -> Option<T> {
        self.get(key).and_then(|b| codec::decode(&b).ok())
    }

    pub fn put(&mut self, key: &[u8], value: Vec<u8>) {
        self.writes.insert(key.to_vec(), Some(value));
    }

    pub fn put_as<T: Serialize>(&mut self, key: &[u8], value: &T) {
        self.put(key, codec::encode(value));
    }

    pub fn delete(&mut self, key: &[u8]) {
        self.writes.insert(key.to_vec(), None);
    }

    /// Committed entries under `prefix`; each returned key is recorded as a
    /// read. Keys created by concurrent transactions are not detected.
    pub fn scan_prefix(&mut self, prefix: &[u8]) -> Vec<(StateKey, Vec<u8>)> {
        let found: Vec<_> = self
            .state
            .scan_prefix(prefix)
            .into_iter()
            .map(|(k, v, ver)| (k.to_vec(), v.to_vec(), ver))
            .collect();
        for (k, _, ver) in &found {
            self.reads.entry(k.clone()).or_insert(Some(*ver));
        }
        found.into_iter().map(|(k, v, _)| (k, v)).collect()
    }

    pub fn into_rwset(self) -> ReadWriteSet {
        ReadWriteSet {
            reads: self.reads.into_iter().collect(),
            writes: self.writes.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::state::WorldState;

    #[test]
    fn records_first_read_version_and_reads_own_writes() {
        let mut s = WorldState::new();
        s.apply(&[(b"k".to_vec(), Some(b"v".to_vec()))], Version::new(3, 1));
        s.set_height(3);
        let mut ctx = TxContext::new(&s);
        assert_eq!(ctx.get(b"k"), Some(b"v".to_vec()));
        ctx.put(b"k", b"w".to_vec());
        assert_eq!(ctx.get(b"k"), Some(b"w".to_vec()));
        assert_eq!(ctx.get(b"missing"), None);
        let rw = ctx.into_rwset();
        assert!(rw.is_well_formed());
        assert_eq!(
            rw.reads,
            vec![
                (b"k".to_vec(), Some(Version::new(3, 1))),
                (b"missing".to_vec(), None)
            ]
        );
        assert_eq!(rw.writes, vec![(b"k".to_vec(), Some(b"w".to_vec()))]);
        assert!(rw.reads_current(&s));
    }

    #[test]
    fn stale_read_detected() {
        let mut s = WorldState::new();
        let mut ctx = TxContext::new(&s);
        ctx.get(b"pref/x");
        let rw = ctx.into_rwset();
        s.apply(&[(b"pref/x".to_vec(), Some(vec![1]))], Version::new(1, 0));
        s.set_height(1);
        assert!(!rw.reads_current(&s));
    }
}
