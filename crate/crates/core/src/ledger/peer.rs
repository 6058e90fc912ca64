use std::collections::BTreeMap;

use super::chain::{committed_nonce, Ledger};
use super::rwset::{ReadWriteSet, TxContext};
use super::tx::{Endorsement, Proposal, TransactionPayload, TxType};
use crate::contract::{self, ExecEnv, Rejection};
use crate::crypto::{KeyPair, PublicKey};
use crate::membership::{may_propose, AdmitArgs, RegulatorDb, Role};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProposeError {
    #[error("proposer is not an admitted participant")]
    UnknownIdentity,
    #[error("nonce {nonce} is not above {last}")]
    StaleNonce { nonce: u64, last: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EndorseError {
    #[error("proposer is not an admitted participant")]
    UnknownIdentity,
    #[error("proposal signature does not verify")]
    BadSignature,
    #[error("stale nonce")]
    StaleNonce,
    #[error("proposer role may not propose this kind")]
    NotPermitted,
    #[error("endorser is not named by the policy")]
    NotInPolicy,
    #[error("validator rejected: {0}")]
    ValidatorRejected(Rejection),
}

/// Public key the proposal must verify under: the roster entry, or the
/// embedded key of a self-registration.
fn proposer_key(
    ledger: &Ledger,
    payload: &TransactionPayload,
) -> Option<(PublicKey, Option<Role>)> {
    if let Some(m) = ledger.roster().get(&payload.proposer) {
        return Some((m.public_key, Some(m.role)));
    }
    if payload.tx_type == TxType::RegisterTelemarketer {
        if let Ok(AdmitArgs::Register(reg)) = payload.decode_args::<AdmitArgs>() {
            if reg.tm_id == payload.proposer {
                return Some((reg.public_key, None));
            }
        }
    }
    None
}

/// Client-side checks plus signing. Circulating the proposal to endorsers is
/// the caller's job.
pub fn propose_transaction(
    ledger: &Ledger,
    key: &KeyPair,
    payload: TransactionPayload,
) -> Result<Proposal, ProposeError> {
    proposer_key(ledger, &payload).ok_or(ProposeError::UnknownIdentity)?;
    let last = committed_nonce(ledger.state(), &payload.proposer);
    if payload.nonce <= last {
        return Err(ProposeError::StaleNonce {
            nonce: payload.nonce,
            last,
        });
    }
    Ok(Proposal::sign(payload, key))
}

/// Endorsing peer: simulates proposals against its committed state.
#[derive(Debug, Clone)]
pub struct Endorser {
    pub id: String,
    pub role: Role,
    key: KeyPair,
    seen_nonces: BTreeMap<String, u64>,
}

impl Endorser {
    pub fn new(id: &str, role: Role, key: KeyPair) -> Self {
        Endorser {
            id: id.to_string(),
            role,
            key,
            seen_nonces: BTreeMap::new(),
        }
    }

    pub fn endorse(
        &mut self,
        ledger: &Ledger,
        regulator: Option<&RegulatorDb>,
        proposal: &Proposal,
    ) -> Result<(Endorsement, ReadWriteSet), EndorseError> {
        let payload = &proposal.payload;
        let (pk, role) = proposer_key(ledger, payload).ok_or(EndorseError::UnknownIdentity)?;
        if !proposal.verify(&pk) {
            return Err(EndorseError::BadSignature);
        }
        let seen = self
            .seen_nonces
            .get(&payload.proposer)
            .copied()
            .unwrap_or(0);
        if payload.nonce <= committed_nonce(ledger.state(), &payload.proposer)
            || payload.nonce <= seen
        {
            return Err(EndorseError::StaleNonce);
        }
        self.seen_nonces
            .insert(payload.proposer.clone(), payload.nonce);
        if let Some(role) = role {
            if !may_propose(role, payload.tx_type) {
                return Err(EndorseError::NotPermitted);
            }
        }
        if !ledger
            .policies()
            .policy_for(payload.tx_type)
            .rule
            .admits(&self.id, self.role)
        {
            return Err(EndorseError::NotInPolicy);
        }
        let rwset =
            simulate(ledger, regulator, payload).map_err(EndorseError::ValidatorRejected)?;
        let endorsement = Endorsement::sign(&self.id, &payload.digest(), &rwset, &self.key);
        Ok((endorsement, rwset))
    }
}

/// Run the validator against the tip state without touching it.
pub fn simulate(
    ledger: &Ledger,
    regulator: Option<&RegulatorDb>,
    payload: &TransactionPayload,
) -> Result<ReadWriteSet, Rejection> {
    let mut ctx = TxContext::new(ledger.state());
    let env = ExecEnv {
        params: ledger.params(),
        regulator,
        anchors: ledger,
        payload_digest: payload.digest(),
    };
    contract::execute(payload, &mut ctx, &env)?;
    Ok(ctx.into_rwset())
}
