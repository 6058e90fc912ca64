//! ScrubResult validation and operator-side token verification.

use std::collections::BTreeSet;

use crate::contract::{ExecEnv, Rejection};
use crate::crypto::{self, ConsortiumKey, Digest, KeyPair, SealedFile};
use crate::ledger::chain::Ledger;
use crate::ledger::rwset::TxContext;
use crate::ledger::state::StateRead;
use crate::ledger::tx::TransactionPayload;
use crate::membership::{load_member, Role, Roster};
use crate::registries::header::is_delegated;
use crate::registries::read_as;
use crate::registries::template::{template_key, TemplateKind, TemplateRecord};

use super::mirror::{is_deliverable, MirrorIndex};
use super::scrub::{parse_file, ObjectStore, ScrubResultArgs, ScrubToken};

pub fn scrub_key(token_id: &[u8; 16]) -> Vec<u8> {
    format!("scrub/{}", hex::encode(token_id)).into_bytes()
}

pub fn load_scrub(state: &dyn StateRead, token_id: &[u8; 16]) -> Option<ScrubResultArgs> {
    read_as(state, &scrub_key(token_id))
}

pub(crate) fn execute_scrub_result(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    env: &ExecEnv<'_>,
) -> Result<(), Rejection> {
    let args: ScrubResultArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let token = &args.token;
    if token.scrubber_id != payload.proposer {
        return Err(Rejection::NotPermitted);
    }
    if !is_delegated(ctx, &args.header, &args.tm_id) {
        return Err(Rejection::NotDelegated);
    }
    match ctx.get_as::<TemplateRecord>(&template_key(&args.template_id)) {
        Some(t) if t.header == args.header && t.kind != TemplateKind::Consent => {}
        _ => return Err(Rejection::UnregisteredTemplate),
    }
    let c = token.counts;
    if c.input < env.params.min_batch_size {
        return Err(Rejection::BatchTooSmall);
    }
    let leg_lines: u64 = token.per_operator.iter().map(|f| f.lines).sum();
    let invalid_lines = token.invalid_file.as_ref().map(|f| f.lines);
    if c.input != c.valid + c.invalid
        || leg_lines != c.valid
        || invalid_lines.is_some_and(|l| l != c.invalid)
    {
        return Err(Rejection::CountMismatch);
    }
    let mut operators = BTreeSet::new();
    for f in &token.per_operator {
        let is_operator =
            load_member(ctx, &f.recipient).is_some_and(|m| m.role == Role::Operator && !m.revoked);
        if !is_operator {
            return Err(Rejection::UnknownOperator);
        }
        if f.lines == 0 || !operators.insert(f.recipient.as_str()) {
            return Err(Rejection::CountMismatch);
        }
    }
    let scrubber = load_member(ctx, &payload.proposer).ok_or(Rejection::UnknownIdentity)?;
    let files = token.per_operator.iter().chain(token.invalid_file.as_ref());
    for f in files {
        if !f.verify(&token.token_id, &scrubber.public_key) {
            return Err(Rejection::BadSignature);
        }
    }
    let tip = ctx.height();
    if token.decision_height > tip
        || env.anchors.state_hash_at(token.decision_height) != Some(token.state_hash)
    {
        return Err(Rejection::StateHashMismatch);
    }
    if payload.timestamp >= env.params.enforcement_tick
        && tip - token.decision_height > env.params.max_scrub_lag_blocks
    {
        return Err(Rejection::StaleIndex);
    }
    let key = scrub_key(&token.token_id);
    if ctx.exists(&key) {
        return Err(Rejection::DuplicateToken);
    }
    ctx.put_as(&key, &args);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenError {
    #[error("token not on chain")]
    TokenNotOnChain,
    #[error("token names no file for this operator")]
    NoFileForOperator,
    #[error("bad scrubber signature")]
    BadSignature,
    #[error("file digest mismatch")]
    DigestMismatch,
}

/// Operator-side check of a token: it must match a committed ScrubResult,
/// the file must be signed by the scrubber, and the decrypted bytes must hash
/// to the signed digest. Returns the operator's numbers.
pub fn verify_scrub_token(
    operator_id: &str,
    operator_key: &KeyPair,
    token: &ScrubToken,
    ledger: &Ledger,
    store: &ObjectStore,
) -> Result<Vec<String>, TokenError> {
    let record = load_scrub(ledger.state(), &token.token_id).ok_or(TokenError::TokenNotOnChain)?;
    if &record.token != token {
        return Err(TokenError::TokenNotOnChain);
    }
    let file = token
        .per_operator
        .iter()
        .find(|f| f.recipient == operator_id)
        .ok_or(TokenError::NoFileForOperator)?;
    let scrubber = Roster::from_state(ledger.state())
        .get(&token.scrubber_id)
        .map(|m| m.public_key);
    if !scrubber.is_some_and(|pk| file.verify(&token.token_id, &pk)) {
        return Err(TokenError::BadSignature);
    }
    let sealed = store
        .get(&file.locator)
        .and_then(SealedFile::from_bytes)
        .ok_or(TokenError::DigestMismatch)?;
    let plain = crypto::open(operator_key, &sealed).map_err(|_| TokenError::DigestMismatch)?;
    if Digest::of(&plain) != file.digest {
        return Err(TokenError::DigestMismatch);
    }
    let lines = parse_file(&plain);
    if lines.len() as u64 != file.lines {
        return Err(TokenError::DigestMismatch);
    }
    Ok(lines)
}

/// Optional local re-scrub: numbers in `lines` that were not deliverable at
/// the token's decision height.
pub fn rescrub_discrepancies(
    lines: &[String],
    record: &ScrubResultArgs,
    ledger: &Ledger,
    key: &ConsortiumKey,
) -> Vec<String> {
    let index = MirrorIndex::from_state(&ledger.state().at(record.token.decision_height));
    lines
        .iter()
        .filter(|n| {
            !is_deliverable(
                &key.keyed_hash(n.as_bytes()),
                &record.header,
                &record.category,
                &index,
            )
        })
        .cloned()
        .collect()
}
