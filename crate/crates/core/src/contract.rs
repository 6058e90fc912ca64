//! Deterministic transaction validators ("smart contracts").
//!
//! A validator reads and writes only through a [`TxContext`], so running it
//! against a state view produces the transaction's read-write set and has no
//! other effect.

use crate::campaign::{complaint, lifecycle, watchlist};
use crate::crypto::Digest;
use crate::ledger::rwset::TxContext;
use crate::ledger::tx::{TransactionPayload, TxType};
use crate::membership::{self, RegulatorDb, Role};
use crate::params::ConsortiumParams;
use crate::registries::{consent, header, preference, template};
use crate::scrubbing::token;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Rejection {
    #[error("unknown identity")]
    UnknownIdentity,
    #[error("role may not propose this transaction kind")]
    NotPermitted,
    #[error("arguments do not decode for this transaction kind")]
    BadArgs,
    #[error("genesis transaction outside block 0")]
    GenesisNotAllowed,
    #[error("identity or key already registered")]
    DuplicateIdentity,
    #[error("registration verification failed")]
    VerificationFailed,
    #[error("regulator database unavailable")]
    RegulatorDbUnavailable,
    #[error("principal entity already registered")]
    DuplicatePrincipalEntity,
    #[error("unknown principal entity")]
    UnknownPrincipalEntity,
    #[error("proposer does not own the principal entity")]
    NotOwner,
    #[error("header must be six characters A-Z or 0-9")]
    BadFormat,
    #[error("header not approved by operator verification")]
    NotApproved,
    #[error("header already registered")]
    DuplicateHeader,
    #[error("header is a lookalike of registered header {0}")]
    LookalikeHeader(String),
    #[error("unknown header")]
    UnknownHeader,
    #[error("telemarketer not admitted")]
    UnknownTelemarketer,
    #[error("telemarketer not delegated for header")]
    NotDelegated,
    #[error("malformed placeholder slots")]
    MalformedPlaceholders,
    #[error("consent template lacks required clause: {0}")]
    ConsentClauseMissing(&'static str),
    #[error("unknown category")]
    UnknownCategory,
    #[error("proposer is not the operator owning the number")]
    WrongOperator,
    #[error("unknown operator")]
    UnknownOperator,
    #[error("template not registered")]
    UnknownTemplate,
    #[error("template is not a consent template for this header")]
    NotConsentTemplate,
    #[error("consent already requested or granted")]
    ConsentExists,
    #[error("consent was revoked")]
    ConsentRevoked,
    #[error("no pending consent request")]
    NoPendingRequest,
    #[error("otp or link token mismatch")]
    OtpMismatch,
    #[error("otp or link token expired")]
    OtpExpired,
    #[error("no consent to revoke")]
    NoConsent,
    #[error("template not registered under header or wrong kind")]
    UnregisteredTemplate,
    #[error("scrub batch below minimum size")]
    BatchTooSmall,
    #[error("scrub decision height is stale")]
    StaleIndex,
    #[error("token state hash does not match state at decision height")]
    StateHashMismatch,
    #[error("token counts are inconsistent")]
    CountMismatch,
    #[error("bad scrubber signature")]
    BadSignature,
    #[error("token already on chain")]
    DuplicateToken,
    #[error("token not on chain")]
    TokenNotOnChain,
    #[error("token issued for a different header")]
    TokenHeaderMismatch,
    #[error("token issued for a different template")]
    TokenTemplateMismatch,
    #[error("token already consumed")]
    TokenAlreadyConsumed,
    #[error("unknown campaign")]
    UnknownCampaign,
    #[error("operator has no leg in campaign")]
    UnknownLeg,
    #[error("leg already reported")]
    LegAlreadyReported,
    #[error("delivery report violates delivered <= attempted <= lines")]
    InvalidReport,
    #[error("complaint id already used")]
    DuplicateComplaint,
    #[error("malformed sender")]
    MalformedSender,
    #[error("complaint count below threshold for action")]
    BelowThreshold,
    #[error("action does not escalate current level")]
    NotEscalation,
}

/// Committed state digests by height, as needed to check scrub anchors.
pub trait StateAnchors {
    fn state_hash_at(&self, height: u64) -> Option<Digest>;
}

pub struct NoAnchors;

impl StateAnchors for NoAnchors {
    fn state_hash_at(&self, _: u64) -> Option<Digest> {
        None
    }
}

/// Node-local inputs a validator may consult besides world state.
pub struct ExecEnv<'a> {
    pub params: &'a ConsortiumParams,
    pub regulator: Option<&'a RegulatorDb>,
    pub anchors: &'a dyn StateAnchors,
    pub payload_digest: Digest,
}

/// Run the validator for `payload.tx_type`.
pub fn execute(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    env: &ExecEnv<'_>,
) -> Result<(), Rejection> {
    if payload.tx_type == TxType::Genesis {
        return Err(Rejection::GenesisNotAllowed);
    }
    if payload.tx_type != TxType::RegisterTelemarketer {
        let proposer =
            membership::load_member(ctx, &payload.proposer).ok_or(Rejection::UnknownIdentity)?;
        if !membership::may_propose(proposer.role, payload.tx_type) {
            return Err(Rejection::NotPermitted);
        }
    }
    match payload.tx_type {
        TxType::Genesis => unreachable!(),
        TxType::RegisterTelemarketer => membership::execute_admit(payload, ctx, env),
        TxType::RegisterPrincipalEntity => header::execute_register_pe(payload, ctx),
        TxType::RegisterHeader => header::execute_register_header(payload, ctx, env),
        TxType::DelegateHeader => header::execute_delegate(payload, ctx),
        TxType::RegisterTemplate => template::execute_register(payload, ctx, false),
        TxType::RegisterConsentTemplate => template::execute_register(payload, ctx, true),
        TxType::UpdatePreference => preference::execute_update(payload, ctx),
        TxType::RequestConsent => consent::execute_request(payload, ctx, env),
        TxType::GrantConsent => consent::execute_grant(payload, ctx, env),
        TxType::RevokeConsent => consent::execute_revoke(payload, ctx),
        TxType::ScrubResult => token::execute_scrub_result(payload, ctx, env),
        TxType::CampaignInit => lifecycle::execute_init(payload, ctx),
        TxType::CampaignStatus => lifecycle::execute_status(payload, ctx),
        TxType::ComplaintFiled => complaint::execute_filed(payload, ctx),
        TxType::DegradedService => watchlist::execute_degraded(payload, ctx, env),
    }
}

/// Role of the proposer as recorded in state. Validators use this for
/// proxy rights that depend on role.
pub(crate) fn proposer_role(ctx: &mut TxContext<'_>, payload: &TransactionPayload) -> Option<Role> {
    membership::load_member(ctx, &payload.proposer).map(|m| m.role)
}
