//! Commit-event-driven mirror of the preference and consent registries.

use std::collections::BTreeMap;

use crate::codec;
use crate::crypto::Digest;
use crate::ledger::chain::CommitEvent;
use crate::ledger::state::StateRead;
use crate::registries::{Category, ConsentRecord, ConsentStatus, PreferenceMode, PreferenceRecord};

const PREF_PREFIX: &[u8] = b"pref/";
const CONSENT_PREFIX: &[u8] = b"consent/";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MirrorError {
    #[error("expected block {expected}, got {got}: resync needed")]
    GapDetected { expected: u64, got: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MirrorIndex {
    pub pref: BTreeMap<Digest, PreferenceRecord>,
    pub consent: BTreeMap<(Digest, String), ConsentStatus>,
    /// Last applied block; `None` before genesis.
    pub height: Option<u64>,
}

impl MirrorIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Full scan of a state view; the reference the incremental index must
    /// agree with.
    pub fn from_state(state: &dyn StateRead) -> Self {
        let mut idx = MirrorIndex {
            height: Some(state.height()),
            ..Default::default()
        };
        for (_, v, _) in state.scan_prefix(PREF_PREFIX) {
            if let Ok(r) = codec::decode::<PreferenceRecord>(v) {
                idx.pref.insert(r.key, r);
            }
        }
        for (_, v, _) in state.scan_prefix(CONSENT_PREFIX) {
            if let Ok(r) = codec::decode::<ConsentRecord>(v) {
                idx.consent.insert((r.key, r.header), r.status);
            }
        }
        idx
    }

    /// Apply one block's commit event. Re-applying an already applied block is
    /// a no-op; skipping a block is an error.
    pub fn apply(&mut self, event: &CommitEvent) -> Result<bool, MirrorError> {
        let expected = self.height.map_or(0, |h| h + 1);
        if event.height < expected {
            return Ok(false);
        }
        if event.height != expected {
            return Err(MirrorError::GapDetected {
                expected,
                got: event.height,
            });
        }
        for (key, value) in &event.writes {
            if key.starts_with(PREF_PREFIX) {
                match value.as_deref().map(codec::decode::<PreferenceRecord>) {
                    Some(Ok(r)) => {
                        self.pref.insert(r.key, r);
                    }
                    _ => {
                        if let Some(d) = digest_from_key(&key[PREF_PREFIX.len()..]) {
                            self.pref.remove(&d);
                        }
                    }
                }
            } else if key.starts_with(CONSENT_PREFIX) {
                if let Some(Ok(r)) = value.as_deref().map(codec::decode::<ConsentRecord>) {
                    self.consent.insert((r.key, r.header), r.status);
                }
            }
        }
        self.height = Some(event.height);
        Ok(true)
    }

    pub fn consent_status(&self, key: &Digest, header: &str) -> Option<ConsentStatus> {
        self.consent.get(&(*key, header.to_string())).copied()
    }
}

fn digest_from_key(hex: &[u8]) -> Option<Digest> {
    std::str::from_utf8(hex)
        .ok()
        .and_then(|s| Digest::from_hex(s).ok())
}

/// Delivery rule: granted consent for the header, or the category is not
/// blocked. No record means fully open. A fully blocked record with
/// `block_consented` also overrides consent.
pub fn is_deliverable(
    key: &Digest,
    header: &str,
    category: &Category,
    index: &MirrorIndex,
) -> bool {
    let consented = index.consent_status(key, header) == Some(ConsentStatus::Granted);
    match index.pref.get(key) {
        None => true,
        Some(r) => {
            let hard_block = r.mode == PreferenceMode::FullyBlocked && r.block_consented;
            (consented && !hard_block) || r.allows(category)
        }
    }
}
