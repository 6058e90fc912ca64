//! Versioned key-value world state.
//!
//! Every write is kept with the `(block height, tx index)` version that
//! produced it, so the store answers both "latest value" reads (endorsement,
//! commit validation) and "value as of height h" reads (audit replay, scrub
//! snapshots) without re-executing the chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest, Hasher};

pub type StateKey = Vec<u8>;

/// MVCC version of a committed value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub height: u64,
    pub tx_index: u32,
}

impl Version {
    pub fn new(height: u64, tx_index: u32) -> Self {
        Version { height, tx_index }
    }
}

/// Read access to a (possibly historical) view of the world state.
pub trait StateRead {
    fn read(&self, key: &[u8]) -> Option<(&[u8], Version)>;

    /// Latest live entries whose key starts with `prefix`, in key order.
    fn scan_prefix(&self, prefix: &[u8]) -> Vec<(&[u8], &[u8], Version)>;

    fn height(&self) -> u64;

    fn version(&self, key: &[u8]) -> Option<Version> {
        self.read(key).map(|(_, v)| v)
    }
}

#[derive(Clone, Debug)]
struct Entry {
    version: Version,
    value: Option<Vec<u8>>,
}

#[derive(Clone, Debug, Default)]
pub struct WorldState {
    entries: BTreeMap<StateKey, Vec<Entry>>,
    height: u64,
}

fn visible(history: &[Entry], height: u64) -> Option<&Entry> {
    // Histories are short and ascending; walk from the newest end.
    history.iter().rev().find(|e| e.version.height <= height)
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn set_height(&mut self, height: u64) {
        debug_assert!(height >= self.height);
        self.height = height;
    }

    /// Apply one transaction's writes at `version`. A `None` value deletes.
    pub fn apply(&mut self, writes: &[(StateKey, Option<Vec<u8>>)], version: Version) {
        for (key, value) in writes {
            let history = self.entries.entry(key.clone()).or_default();
            let live = history.last().is_some_and(|e| e.value.is_some());
            if value.is_none() && !live {
                continue;
            }
            history.push(Entry {
                version,
                value: value.clone(),
            });
        }
    }

    /// Discard every write made above `height`.
    pub fn rollback_to(&mut self, height: u64) {
        self.entries.retain(|_, history| {
            history.retain(|e| e.version.height <= height);
            !history.is_empty()
        });
        self.height = self.height.min(height);
    }

    pub fn get(&self, key: &[u8]) -> Option<&[u8]> {
        self.read(key).map(|(v, _)| v)
    }

    pub fn at(&self, height: u64) -> AtHeight<'_> {
        AtHeight {
            state: self,
            height: height.min(self.height),
        }
    }

    /// Live entries at the latest height, in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&[u8], &[u8], Version)> {
        self.entries_at(self.height)
    }

    pub fn entries_at(&self, height: u64) -> impl Iterator<Item = (&[u8], &[u8], Version)> {
        self.entries.iter().filter_map(move |(k, h)| {
            visible(h, height)
                .and_then(|e| e.value.as_deref().map(|v| (k.as_slice(), v, e.version)))
        })
    }

    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Digest over the live entries sorted by key. Independent of the order
    /// in which entries were inserted.
    pub fn state_hash(&self) -> Digest {
        self.state_hash_at(self.height)
    }

    pub fn state_hash_at(&self, height: u64) -> Digest {
        hash_entries(self.entries_at(height))
    }

    /// Flattened copy of the state as it was at `height`.
    pub fn snapshot_at(&self, height: u64) -> WorldState {
        let mut entries = BTreeMap::new();
        for (k, v, ver) in self.entries_at(height) {
            entries.insert(
                k.to_vec(),
                vec![Entry {
                    version: ver,
                    value: Some(v.to_vec()),
                }],
            );
        }
        WorldState {
            entries,
            height: height.min(self.height),
        }
    }

    /// Every live entry's version is at or below the current height.
    pub fn versions_within_height(&self) -> bool {
        self.entries().all(|(_, _, v)| v.height <= self.height)
    }
}

pub(crate) fn hash_entries<'a>(
    entries: impl Iterator<Item = (&'a [u8], &'a [u8], Version)>,
) -> Digest {
    let collected: Vec<_> = entries.collect();
    let mut h = Hasher::new();
    h.update(&(collected.len() as u64).to_be_bytes());
    for (k, v, ver) in collected {
        h.update(&(k.len() as u64).to_be_bytes())
            .update(k)
            .update(&(v.len() as u64).to_be_bytes())
            .update(v)
            .update(&ver.height.to_be_bytes())
            .update(&ver.tx_index.to_be_bytes());
    }
    h.finish()
}

impl StateRead for WorldState {
    fn read(&self, key: &[u8]) -> Option<(&[u8], Version)> {
        let e = self.entries.get(key)?.last()?;
        e.value.as_deref().map(|v| (v, e.version))
    }

    fn scan_prefix(&self, prefix: &[u8]) -> Vec<(&[u8], &[u8], Version)> {
        scan_at(self, prefix, self.height)
    }

    fn height(&self) -> u64 {
        self.height
    }
}

fn scan_at<'s>(
    state: &'s WorldState,
    prefix: &[u8],
    height: u64,
) -> Vec<(&'s [u8], &'s [u8], Version)> {
    state
        .entries
        .range(prefix.to_vec()..)
        .take_while(|(k, _)| k.starts_with(prefix))
        .filter_map(|(k, h)| {
            visible(h, height)
                .and_then(|e| e.value.as_deref().map(|v| (k.as_slice(), v, e.version)))
        })
        .collect()
}

/// Historical view of a [`WorldState`].
#[derive(Clone, Copy)]
pub struct AtHeight<'a> {
    state: &'a WorldState,
    height: u64,
}

impl StateRead for AtHeight<'_> {
    fn read(&self, key: &[u8]) -> Option<(&[u8], Version)> {
        let e = visible(self.state.entries.get(key)?, self.height)?;
        e.value.as_deref().map(|v| (v, e.version))
    }

    fn scan_prefix(&self, prefix: &[u8]) -> Vec<(&[u8], &[u8], Version)> {
        scan_at(self.state, prefix, self.height)
    }

    fn height(&self) -> u64 {
        self.height
    }
}
