//! Two-phase consent: a delegated telemarketer requests consent under a
//! registered consent template, and the subscriber's operator relays the
//! OTP or link response that grants it.

use serde::{Deserialize, Serialize};

use super::header::is_delegated;
use super::template::{template_key, TemplateKind, TemplateRecord};
use crate::contract::{ExecEnv, Rejection};
use crate::crypto::Digest;
use crate::ledger::rwset::TxContext;
use crate::ledger::tx::TransactionPayload;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentStatus {
    Requested,
    Granted,
    Revoked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsentChannel {
    Otp,
    Link,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub key: Digest,
    pub header: String,
    pub status: ConsentStatus,
    pub consent_template_id: Digest,
    pub channel: ConsentChannel,
    /// Hash of the outstanding OTP or link token; never the code itself.
    pub challenge_hash: Digest,
    pub expiry_tick: u64,
    pub history: Vec<(ConsentStatus, u64)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestConsentArgs {
    pub key: Digest,
    pub header: String,
    pub consent_template_id: Digest,
    pub channel: ConsentChannel,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantConsentArgs {
    pub key: Digest,
    pub header: String,
    /// OTP digits or link token as entered by the subscriber.
    pub response: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevokeConsentArgs {
    pub key: Digest,
    pub header: String,
}

pub fn consent_key(key: &Digest, header: &str) -> Vec<u8> {
    format!("consent/{}/{header}", key.to_hex()).into_bytes()
}

/// OTP (6 digits) or link token (128 bits, hex) sent with a request. Derived
/// from the request payload so every endorser computes the same value.
pub fn issue_challenge(
    key: &Digest,
    header: &str,
    request_digest: &Digest,
    channel: ConsentChannel,
) -> String {
    let d = Digest::of_parts(&[
        b"ucc-consent-challenge",
        key.as_bytes(),
        header.as_bytes(),
        request_digest.as_bytes(),
    ]);
    match channel {
        ConsentChannel::Otp => {
            let n = u64::from_be_bytes(d.0[..8].try_into().unwrap()) % 1_000_000;
            format!("{n:06}")
        }
        ConsentChannel::Link => hex::encode(&d.0[..16]),
    }
}

pub fn challenge_hash(key: &Digest, header: &str, response: &str) -> Digest {
    Digest::of_parts(&[
        b"ucc-consent-response",
        key.as_bytes(),
        header.as_bytes(),
        response.as_bytes(),
    ])
}

pub(crate) fn execute_request(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    env: &ExecEnv<'_>,
) -> Result<(), Rejection> {
    let args: RequestConsentArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    if !is_delegated(ctx, &args.header, &payload.proposer) {
        return Err(Rejection::NotDelegated);
    }
    let tpl: TemplateRecord = ctx
        .get_as(&template_key(&args.consent_template_id))
        .ok_or(Rejection::UnknownTemplate)?;
    if tpl.kind != TemplateKind::Consent || tpl.header != args.header {
        return Err(Rejection::NotConsentTemplate);
    }
    let key = consent_key(&args.key, &args.header);
    let challenge = issue_challenge(&args.key, &args.header, &env.payload_digest, args.channel);
    let expiry_tick = payload.timestamp + env.params.otp_ttl_ticks;
    let record = match ctx.get_as::<ConsentRecord>(&key) {
        None => ConsentRecord {
            key: args.key,
            header: args.header.clone(),
            status: ConsentStatus::Requested,
            consent_template_id: args.consent_template_id,
            channel: args.channel,
            challenge_hash: challenge_hash(&args.key, &args.header, &challenge),
            expiry_tick,
            history: vec![(ConsentStatus::Requested, payload.timestamp)],
        },
        Some(r) if r.status == ConsentStatus::Requested && payload.timestamp > r.expiry_tick => {
            ConsentRecord {
                consent_template_id: args.consent_template_id,
                channel: args.channel,
                challenge_hash: challenge_hash(&args.key, &args.header, &challenge),
                expiry_tick,
                ..r
            }
        }
        Some(r) if r.status == ConsentStatus::Revoked => return Err(Rejection::ConsentRevoked),
        Some(_) => return Err(Rejection::ConsentExists),
    };
    ctx.put_as(&key, &record);
    Ok(())
}

pub(crate) fn execute_grant(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    _env: &ExecEnv<'_>,
) -> Result<(), Rejection> {
    let args: GrantConsentArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let key = consent_key(&args.key, &args.header);
    let mut record: ConsentRecord = ctx.get_as(&key).ok_or(Rejection::NoPendingRequest)?;
    if record.status != ConsentStatus::Requested {
        return Err(Rejection::NoPendingRequest);
    }
    if payload.timestamp > record.expiry_tick {
        return Err(Rejection::OtpExpired);
    }
    if challenge_hash(&args.key, &args.header, &args.response) != record.challenge_hash {
        return Err(Rejection::OtpMismatch);
    }
    record.status = ConsentStatus::Granted;
    record
        .history
        .push((ConsentStatus::Granted, payload.timestamp));
    ctx.put_as(&key, &record);
    Ok(())
}

pub(crate) fn execute_revoke(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
) -> Result<(), Rejection> {
    let args: RevokeConsentArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let key = consent_key(&args.key, &args.header);
    let mut record: ConsentRecord = ctx.get_as(&key).ok_or(Rejection::NoConsent)?;
    if record.status == ConsentStatus::Revoked {
        return Err(Rejection::NoConsent);
    }
    record.status = ConsentStatus::Revoked;
    record
        .history
        .push((ConsentStatus::Revoked, payload.timestamp));
    ctx.put_as(&key, &record);
    Ok(())
}
