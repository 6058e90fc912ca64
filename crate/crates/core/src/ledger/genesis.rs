use serde::{Deserialize, Serialize};

use super::block::Block;
use super::policy::PolicyTable;
use super::rwset::ReadWriteSet;
use super::tx::{EndorsedTx, Proposal, TransactionPayload, TxType};
use crate::codec;
use crate::crypto::{CryptoError, Digest, Signature};
use crate::membership::{member_key, member_pk_key, GenesisParticipant, ParticipantIdentity};
use crate::params::ConsortiumParams;

pub const PARAMS_KEY: &[u8] = b"cfg/params";
pub const POLICIES_KEY: &[u8] = b"cfg/policies";
pub const GENESIS_PROPOSER: &str = "genesis";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenesisArgs {
    pub participants: Vec<ParticipantIdentity>,
    pub params: ConsortiumParams,
    pub policies: PolicyTable,
}

impl GenesisArgs {
    /// The writes block 0 applies: bootstrap identities and configuration.
    pub fn rwset(&self) -> ReadWriteSet {
        let mut writes: Vec<(Vec<u8>, Option<Vec<u8>>)> = Vec::new();
        for p in &self.participants {
            writes.push((member_key(&p.id), Some(codec::encode(p))));
            writes.push((member_pk_key(&p.public_key), Some(codec::encode(&p.id))));
        }
        writes.push((PARAMS_KEY.to_vec(), Some(codec::encode(&self.params))));
        writes.push((POLICIES_KEY.to_vec(), Some(codec::encode(&self.policies))));
        writes.sort_by(|a, b| a.0.cmp(&b.0));
        writes.dedup_by(|a, b| a.0 == b.0);
        ReadWriteSet {
            reads: Vec::new(),
            writes,
        }
    }

    pub fn has_unique_identities(&self) -> bool {
        let mut ids: Vec<_> = self.participants.iter().map(|p| &p.id).collect();
        let mut pks: Vec<_> = self.participants.iter().map(|p| p.public_key).collect();
        ids.sort();
        pks.sort();
        let n = ids.len();
        ids.dedup();
        pks.dedup();
        ids.len() == n && pks.len() == n
    }
}

pub fn genesis_block(args: &GenesisArgs) -> Block {
    let payload = TransactionPayload::new(TxType::Genesis, args, GENESIS_PROPOSER, 0, 0);
    let tx = EndorsedTx {
        proposal: Proposal {
            payload,
            signature: Signature([0; 64]),
        },
        rwset: args.rwset(),
        endorsements: Vec::new(),
    };
    let mut block = Block::new(0, Digest::ZERO, 0, vec![tx]);
    block.validity_flags = vec![true];
    block
}

/// Structured-text genesis listing: bootstrap identities plus parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisFile {
    pub participants: Vec<GenesisParticipant>,
    #[serde(default)]
    pub params: ConsortiumParams,
    #[serde(default)]
    pub policies: Option<PolicyTable>,
}

impl GenesisFile {
    pub fn to_args(&self) -> Result<GenesisArgs, CryptoError> {
        Ok(GenesisArgs {
            participants: self
                .participants
                .iter()
                .map(|p| p.to_identity())
                .collect::<Result<_, _>>()?,
            params: self.params.clone(),
            policies: self.policies.clone().unwrap_or_default(),
        })
    }

    pub fn from_args(args: &GenesisArgs) -> Self {
        GenesisFile {
            participants: args
                .participants
                .iter()
                .map(|p| GenesisParticipant {
                    id: p.id.clone(),
                    role: p.role,
                    public_key: p.public_key.to_hex(),
                    region: p.region.clone(),
                })
                .collect(),
            params: args.params.clone(),
            policies: Some(args.policies.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::membership::Role;

    #[test]
    fn genesis_file_round_trips_through_json() {
        let args = GenesisArgs {
            participants: vec![ParticipantIdentity {
                id: "op-1".into(),
                role: Role::Operator,
                public_key: KeyPair::derive(b"op-1").public(),
                region: Some("VM".into()),
                admitted_tick: 0,
                revoked: false,
            }],
            params: ConsortiumParams::default(),
            policies: PolicyTable::default(),
        };
        let json = serde_json::to_string_pretty(&GenesisFile::from_args(&args)).unwrap();
        let back: GenesisFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_args().unwrap(), args);
        let b = genesis_block(&args);
        assert_eq!(b.prev_hash, Digest::ZERO);
        assert!(b.hash_is_valid());
        assert!(b.txs[0].rwset.is_well_formed());
    }
}
