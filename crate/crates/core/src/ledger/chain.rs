use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use tracing::{debug, warn};

use super::block::Block;
use super::genesis::GenesisArgs;
use super::policy::PolicyTable;
use super::state::{StateKey, StateRead, Version, WorldState};
use super::tx::{EndorsedTx, TxType};
use crate::codec;
use crate::contract::StateAnchors;
use crate::crypto::Digest;
use crate::membership::{may_propose, AdmitArgs, Roster};
use crate::params::ConsortiumParams;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CommitError {
    #[error("block {height}: prev_hash does not match chain tip")]
    BrokenChain { height: u64 },
    #[error("expected block at height {expected}, got {found}")]
    HeightMismatch { expected: u64, found: u64 },
    #[error("block {0} is corrupt")]
    CorruptBlock(u64),
    #[error("invalid genesis block")]
    InvalidGenesis,
}

/// Why a transaction was marked invalid at commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum InvalidReason {
    #[error("genesis transaction outside block 0")]
    GenesisNotAllowed,
    #[error("malformed read-write set")]
    MalformedRwSet,
    #[error("unknown proposer")]
    UnknownIdentity,
    #[error("bad proposer signature")]
    BadProposerSignature,
    #[error("role may not propose this kind")]
    NotPermitted,
    #[error("stale nonce")]
    StaleNonce,
    #[error("bad endorsement")]
    BadEndorsement,
    #[error("endorsement policy not satisfied")]
    PolicyNotSatisfied,
    #[error("read version changed since endorsement")]
    MvccConflict,
}

/// Writes applied by one committed block, in transaction order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitEvent {
    pub height: u64,
    pub timestamp: u64,
    pub writes: Vec<(StateKey, Option<Vec<u8>>)>,
}

#[derive(Debug, Clone)]
pub struct CommitOutcome {
    pub height: u64,
    pub flags: Vec<bool>,
    pub invalid: Vec<(usize, InvalidReason)>,
    pub event: CommitEvent,
}

pub fn nonce_key(id: &str) -> Vec<u8> {
    format!("nonce/{id}").into_bytes()
}

pub fn committed_nonce(state: &dyn StateRead, id: &str) -> u64 {
    state
        .read(&nonce_key(id))
        .and_then(|(v, _)| codec::decode::<u64>(v).ok())
        .unwrap_or(0)
}

/// One node's copy of the chain plus the world state it implies.
#[derive(Debug)]
pub struct Ledger {
    blocks: Vec<Block>,
    state: WorldState,
    params: ConsortiumParams,
    policies: PolicyTable,
    hash_cache: RefCell<BTreeMap<u64, Digest>>,
}

impl Ledger {
    pub fn from_genesis(block: Block) -> Result<Self, CommitError> {
        let ok = block.height == 0
            && block.prev_hash == Digest::ZERO
            && block.hash_is_valid()
            && block.txs.len() == 1
            && block.txs[0].payload().tx_type == TxType::Genesis
            && (block.validity_flags.is_empty() || block.validity_flags == [true]);
        if !ok {
            return Err(CommitError::InvalidGenesis);
        }
        let args: GenesisArgs = block.txs[0]
            .payload()
            .decode_args()
            .map_err(|_| CommitError::InvalidGenesis)?;
        if block.txs[0].rwset != args.rwset() || !args.has_unique_identities() {
            return Err(CommitError::InvalidGenesis);
        }
        let mut state = WorldState::new();
        state.apply(&block.txs[0].rwset.writes, Version::new(0, 0));
        let mut block = block;
        block.validity_flags = vec![true];
        Ok(Ledger {
            blocks: vec![block],
            state,
            params: args.params,
            policies: args.policies,
            hash_cache: RefCell::new(BTreeMap::new()),
        })
    }

    /// Rebuild a ledger by committing every block after genesis. Returns the
    /// first height that fails.
    pub fn replay(blocks: &[Block]) -> Result<Self, (u64, CommitError)> {
        let first = blocks
            .first()
            .cloned()
            .ok_or((0, CommitError::InvalidGenesis))?;
        let mut ledger = Ledger::from_genesis(first).map_err(|e| (0, e))?;
        for (i, b) in blocks.iter().enumerate().skip(1) {
            ledger.commit(b.clone()).map_err(|e| (i as u64, e))?;
        }
        Ok(ledger)
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip_hash(&self) -> Digest {
        self.blocks.last().expect("genesis present").block_hash
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn params(&self) -> &ConsortiumParams {
        &self.params
    }

    pub fn policies(&self) -> &PolicyTable {
        &self.policies
    }

    pub fn roster(&self) -> Roster {
        Roster::from_state(&self.state)
    }

    pub fn state_hash(&self) -> Digest {
        self.state_hash_at(self.height()).expect("tip height")
    }

    pub fn state_hash_at(&self, height: u64) -> Option<Digest> {
        if height > self.height() {
            return None;
        }
        if let Some(d) = self.hash_cache.borrow().get(&height) {
            return Some(*d);
        }
        let d = self.state.state_hash_at(height);
        self.hash_cache.borrow_mut().insert(height, d);
        Some(d)
    }

    /// Commit events for every block from `from` to the tip.
    pub fn events_from(&self, from: u64) -> Vec<CommitEvent> {
        self.blocks
            .iter()
            .skip(from as usize)
            .map(block_event)
            .collect()
    }

    /// Check one transaction against the current state.
    pub fn validate_tx(&self, tx: &EndorsedTx) -> Result<(), InvalidReason> {
        validate_tx(&self.state, &self.policies, tx)
    }

    /// Validate every transaction, apply the valid ones and append the block.
    pub fn commit(&mut self, mut block: Block) -> Result<CommitOutcome, CommitError> {
        let expected = self.height() + 1;
        if block.height != expected {
            return Err(CommitError::HeightMismatch {
                expected,
                found: block.height,
            });
        }
        if block.prev_hash != self.tip_hash() {
            return Err(CommitError::BrokenChain {
                height: block.height,
            });
        }
        if !block.hash_is_valid() {
            return Err(CommitError::CorruptBlock(block.height));
        }
        let h = block.height;
        let mut flags = Vec::with_capacity(block.txs.len());
        let mut invalid = Vec::new();
        for (i, tx) in block.txs.iter().enumerate() {
            match validate_tx(&self.state, &self.policies, tx) {
                Ok(()) => {
                    let v = Version::new(h, i as u32);
                    self.state.apply(&tx.rwset.writes, v);
                    let p = tx.payload();
                    self.state.apply(
                        &[(nonce_key(&p.proposer), Some(codec::encode(&p.nonce)))],
                        v,
                    );
                    flags.push(true);
                }
                Err(reason) => {
                    debug!(height = h, index = i, tx_type = %tx.payload().tx_type, %reason, "dropping invalid tx");
                    invalid.push((i, reason));
                    flags.push(false);
                }
            }
        }
        if !block.validity_flags.is_empty() && block.validity_flags != flags {
            warn!(
                height = h,
                "stored validity flags disagree with recomputation"
            );
            self.state.rollback_to(h - 1);
            return Err(CommitError::CorruptBlock(h));
        }
        self.state.set_height(h);
        block.validity_flags = flags.clone();
        let event = block_event(&block);
        self.blocks.push(block);
        Ok(CommitOutcome {
            height: h,
            flags,
            invalid,
            event,
        })
    }
}

impl StateAnchors for Ledger {
    fn state_hash_at(&self, height: u64) -> Option<Digest> {
        Ledger::state_hash_at(self, height)
    }
}

fn block_event(block: &Block) -> CommitEvent {
    let writes = block
        .valid_txs()
        .flat_map(|(_, tx)| tx.rwset.writes.iter().cloned())
        .collect();
    CommitEvent {
        height: block.height,
        timestamp: block.timestamp,
        writes,
    }
}

pub fn validate_tx(
    state: &WorldState,
    policies: &PolicyTable,
    tx: &EndorsedTx,
) -> Result<(), InvalidReason> {
    let payload = tx.payload();
    if payload.tx_type == TxType::Genesis {
        return Err(InvalidReason::GenesisNotAllowed);
    }
    if !tx.rwset.is_well_formed() {
        return Err(InvalidReason::MalformedRwSet);
    }
    let roster = Roster::from_state(state);
    let proposer_key = match roster.get(&payload.proposer) {
        Some(m) => {
            if !may_propose(m.role, payload.tx_type) {
                return Err(InvalidReason::NotPermitted);
            }
            m.public_key
        }
        None if payload.tx_type == TxType::RegisterTelemarketer => {
            match payload.decode_args::<AdmitArgs>() {
                Ok(AdmitArgs::Register(reg)) if reg.tm_id == payload.proposer => reg.public_key,
                _ => return Err(InvalidReason::UnknownIdentity),
            }
        }
        None => return Err(InvalidReason::UnknownIdentity),
    };
    if !tx.proposal.verify(&proposer_key) {
        return Err(InvalidReason::BadProposerSignature);
    }
    if payload.nonce <= committed_nonce(state, &payload.proposer) {
        return Err(InvalidReason::StaleNonce);
    }
    if tx.endorsements.is_empty() {
        return Err(InvalidReason::PolicyNotSatisfied);
    }
    let payload_digest = payload.digest();
    let rwset_digest = tx.rwset.digest();
    let mut endorsers = BTreeSet::new();
    for e in &tx.endorsements {
        let Some(m) = roster.get(&e.endorser) else {
            return Err(InvalidReason::BadEndorsement);
        };
        if e.rwset_digest != rwset_digest || !e.verify(&payload_digest, &m.public_key) {
            return Err(InvalidReason::BadEndorsement);
        }
        endorsers.insert(e.endorser.clone());
    }
    if !policies
        .policy_for(payload.tx_type)
        .rule
        .evaluate(&endorsers, &roster)
    {
        return Err(InvalidReason::PolicyNotSatisfied);
    }
    if !tx.rwset.reads_current(state) {
        return Err(InvalidReason::MvccConflict);
    }
    Ok(())
}

/// Walk hash links, recompute block hashes and replay every block, comparing
/// the recomputed validity flags. Returns the first height that fails.
pub fn verify_chain(blocks: &[Block]) -> Result<(), u64> {
    if blocks.is_empty() {
        return Err(0);
    }
    for (i, b) in blocks.iter().enumerate() {
        let prev = if i == 0 {
            Digest::ZERO
        } else {
            blocks[i - 1].block_hash
        };
        if b.height != i as u64 || b.prev_hash != prev || !b.hash_is_valid() {
            return Err(i as u64);
        }
    }
    Ledger::replay(blocks).map(|_| ()).map_err(|(h, _)| h)
}
