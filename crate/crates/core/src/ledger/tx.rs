use std::fmt;

use serde::{Deserialize, Serialize};

use super::rwset::ReadWriteSet;
use crate::codec;
use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature};

/// Transaction kinds. `Genesis` only ever appears in block 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxType {
    Genesis,
    RegisterTelemarketer,
    RegisterPrincipalEntity,
    RegisterHeader,
    DelegateHeader,
    RegisterTemplate,
    RegisterConsentTemplate,
    UpdatePreference,
    RequestConsent,
    GrantConsent,
    RevokeConsent,
    ScrubResult,
    CampaignInit,
    CampaignStatus,
    ComplaintFiled,
    DegradedService,
}

impl TxType {
    pub const ALL: [TxType; 16] = [
        TxType::Genesis,
        TxType::RegisterTelemarketer,
        TxType::RegisterPrincipalEntity,
        TxType::RegisterHeader,
        TxType::DelegateHeader,
        TxType::RegisterTemplate,
        TxType::RegisterConsentTemplate,
        TxType::UpdatePreference,
        TxType::RequestConsent,
        TxType::GrantConsent,
        TxType::RevokeConsent,
        TxType::ScrubResult,
        TxType::CampaignInit,
        TxType::CampaignStatus,
        TxType::ComplaintFiled,
        TxType::DegradedService,
    ];

    /// Kinds that mutate a registry (everything an observer may not propose).
    pub fn is_registry_mutation(self) -> bool {
        !matches!(
            self,
            TxType::Genesis | TxType::ComplaintFiled | TxType::DegradedService
        )
    }
}

impl fmt::Display for TxType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionPayload {
    pub tx_type: TxType,
    /// Canonically encoded argument struct for `tx_type`.
    pub args: Vec<u8>,
    pub proposer: String,
    pub nonce: u64,
    pub timestamp: u64,
}

impl TransactionPayload {
    pub fn new<A: Serialize>(
        tx_type: TxType,
        args: &A,
        proposer: &str,
        nonce: u64,
        timestamp: u64,
    ) -> Self {
        TransactionPayload {
            tx_type,
            args: codec::encode(args),
            proposer: proposer.to_string(),
            nonce,
            timestamp,
        }
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&codec::encode(self))
    }

    pub fn decode_args<A: serde::de::DeserializeOwned>(&self) -> Result<A, codec::CodecError> {
        codec::decode(&self.args)
    }
}

fn proposal_message(payload_digest: &Digest) -> Vec<u8> {
    let mut m = b"ucc-proposal".to_vec();
    m.extend_from_slice(payload_digest.as_bytes());
    m
}

fn endorsement_message(payload_digest: &Digest, rwset_digest: &Digest) -> Vec<u8> {
    let mut m = b"ucc-endorse".to_vec();
    m.extend_from_slice(payload_digest.as_bytes());
    m.extend_from_slice(rwset_digest.as_bytes());
    m
}

/// A payload signed by its proposer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub payload: TransactionPayload,
    pub signature: Signature,
}

impl Proposal {
    pub fn sign(payload: TransactionPayload, key: &KeyPair) -> Self {
        let signature = key.sign(&proposal_message(&payload.digest()));
        Proposal { payload, signature }
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        crypto::verify(
            key,
            &proposal_message(&self.payload.digest()),
            &self.signature,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub endorser: String,
    pub rwset_digest: Digest,
    pub signature: Signature,
}

impl Endorsement {
    pub fn sign(
        endorser: &str,
        payload_digest: &Digest,
        rwset: &ReadWriteSet,
        key: &KeyPair,
    ) -> Self {
        let rwset_digest = rwset.digest();
        Endorsement {
            endorser: endorser.to_string(),
            rwset_digest,
            signature: key.sign(&endorsement_message(payload_digest, &rwset_digest)),
        }
    }

    pub fn verify(&self, payload_digest: &Digest, key: &PublicKey) -> bool {
        crypto::verify(
            key,
            &endorsement_message(payload_digest, &self.rwset_digest),
            &self.signature,
        )
    }
}

/// What the ordering service receives and blocks carry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndorsedTx {
    pub proposal: Proposal,
    pub rwset: ReadWriteSet,
    pub endorsements: Vec<Endorsement>,
}

impl EndorsedTx {
    pub fn payload(&self) -> &TransactionPayload {
        &self.proposal.payload
    }

    pub fn tx_id(&self) -> Digest {
        self.proposal.payload.digest()
    }
}
