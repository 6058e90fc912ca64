use serde::{Deserialize, Serialize};

use super::tx::EndorsedTx;
use crate::codec;
use crate::crypto::Digest;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Digest,
    /// Tick at which the orderer cut the block.
    pub timestamp: u64,
    pub txs: Vec<EndorsedTx>,
    pub block_hash: Digest,
    /// Set by the committer; empty on blocks fresh from the orderer.
    pub validity_flags: Vec<bool>,
}

impl Block {
    pub fn new(height: u64, prev_hash: Digest, timestamp: u64, txs: Vec<EndorsedTx>) -> Self {
        let block_hash = Self::compute_hash(height, &prev_hash, timestamp, &txs);
        Block {
            height,
            prev_hash,
            timestamp,
            txs,
            block_hash,
            validity_flags: Vec::new(),
        }
    }

    pub fn compute_hash(
        height: u64,
        prev_hash: &Digest,
        timestamp: u64,
        txs: &[EndorsedTx],
    ) -> Digest {
        Digest::of(&codec::encode(&(height, prev_hash, timestamp, txs)))
    }

    pub fn hash_is_valid(&self) -> bool {
        Self::compute_hash(self.height, &self.prev_hash, self.timestamp, &self.txs)
            == self.block_hash
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, codec::CodecError> {
        codec::decode(bytes)
    }

    /// Transactions with their commit flag. Unflagged blocks report `false`.
    pub fn valid_txs(&self) -> impl Iterator<Item = (usize, &EndorsedTx)> {
        self.txs
            .iter()
            .enumerate()
            .filter(move |(i, _)| self.validity_flags.get(*i).copied().unwrap_or(false))
    }
}
