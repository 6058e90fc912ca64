use serde::{Deserialize, Serialize};

use super::block::Block;
use super::tx::EndorsedTx;
use crate::crypto::Digest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub max_batch_size: usize,
    /// Ticks the oldest pending transaction may wait before a partial cut.
    pub batch_timeout: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            max_batch_size: 50,
            batch_timeout: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingTx {
    pub arrival: u64,
    pub tx: EndorsedTx,
}

/// Cut as many blocks as the batch rules allow at tick `now`. Transactions
/// are ordered by (arrival tick, proposer id, nonce). Returns the blocks and
/// whatever is left pending.
pub fn order_and_cut_block(
    mut pending: Vec<PendingTx>,
    config: &BatchConfig,
    next_height: u64,
    prev_hash: Digest,
    now: u64,
) -> (Vec<Block>, Vec<PendingTx>) {
    pending.sort_by(|a, b| {
        let (pa, pb) = (a.tx.payload(), b.tx.payload());
        (a.arrival, &pa.proposer, pa.nonce).cmp(&(b.arrival, &pb.proposer, pb.nonce))
    });
    let max = config.max_batch_size.max(1);
    let mut blocks = Vec::new();
    let (mut height, mut prev) = (next_height, prev_hash);
    let mut rest = pending.as_slice();
    loop {
        let full = rest.len() >= max;
        let timed_out =
            !rest.is_empty() && now.saturating_sub(rest[0].arrival) >= config.batch_timeout;
        if !full && !timed_out {
            break;
        }
        let take = rest.len().min(max);
        let txs = rest[..take].iter().map(|p| p.tx.clone()).collect();
        let block = Block::new(height, prev, now, txs);
        prev = block.block_hash;
        height += 1;
        blocks.push(block);
        rest = &rest[take..];
    }
    let remaining = rest.to_vec();
    (blocks, remaining)
}

/// Pluggable ordering service. The simulation runs a single logical orderer;
/// a replicated implementation only has to honour the same contract.
pub trait OrderingService {
    fn submit(&mut self, tx: EndorsedTx, arrival: u64);
    fn cut(&mut self, now: u64) -> Vec<Block>;
    fn pending_len(&self) -> usize;
}

#[derive(Debug, Clone)]
pub struct SoloOrderer {
    config: BatchConfig,
    pending: Vec<PendingTx>,
    next_height: u64,
    prev_hash: Digest,
}

impl SoloOrderer {
    pub fn new(config: BatchConfig, genesis_hash: Digest) -> Self {
        SoloOrderer {
            config,
            pending: Vec::new(),
            next_height: 1,
            prev_hash: genesis_hash,
        }
    }
}

impl OrderingService for SoloOrderer {
    fn submit(&mut self, tx: EndorsedTx, arrival: u64) {
        self.pending.push(PendingTx { arrival, tx });
    }

    fn cut(&mut self, now: u64) -> Vec<Block> {
        let pending = std::mem::take(&mut self.pending);
        let (blocks, rest) =
            order_and_cut_block(pending, &self.config, self.next_height, self.prev_hash, now);
        self.pending = rest;
        if let Some(last) = blocks.last() {
            self.next_height = last.height + 1;
            self.prev_hash = last.block_hash;
        }
        blocks
    }

    fn pending_len(&self) -> usize {
        self.pending.len()
    }
}
