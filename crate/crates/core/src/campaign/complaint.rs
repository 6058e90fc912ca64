//! Subscriber complaints and their RTM/UTM classification.

use serde::{Deserialize, Serialize};

use crate::contract::Rejection;
use crate::crypto::{ConsortiumKey, Digest};
use crate::ledger::rwset::TxContext;
use crate::ledger::state::StateRead;
use crate::ledger::tx::TransactionPayload;
use crate::registries::header::{header_key, is_valid_header, strip_display_prefix};
use crate::registries::{normalize_number, read_as};

/// Complaint sender: a header, or a hashed ten-digit line.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SenderRef {
    Header(String),
    Line(Digest),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplaintClass {
    Rtm,
    Utm,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pending,
    Violation { operator: Option<String> },
    Compliant,
    UnregisteredSender,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pending => "pending",
            Verdict::Violation { .. } => "violation",
            Verdict::Compliant => "compliant",
            Verdict::UnregisteredSender => "unregistered_sender",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplaintFiledArgs {
    pub complaint_id: String,
    pub subscriber: Digest,
    pub sender: SenderRef,
    pub message_text: String,
    pub received_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplaintRecord {
    pub complaint_id: String,
    pub subscriber: Digest,
    pub sender: SenderRef,
    pub message_text: String,
    pub received_tick: u64,
    pub class: ComplaintClass,
    pub verdict: Verdict,
    pub filed_tick: u64,
}

pub fn complaint_key(id: &str) -> Vec<u8> {
    format!("cmp/{id}").into_bytes()
}

/// Per-line complaint marker; the watch list counts these.
pub fn line_complaint_prefix(line: &Digest) -> Vec<u8> {
    format!("cmpl/{}/", line.to_hex()).into_bytes()
}

pub fn load_complaint(state: &dyn StateRead, id: &str) -> Option<ComplaintRecord> {
    read_as(state, &complaint_key(id))
}

/// Interpret a sender as displayed on the handset. Line numbers are hashed
/// here so they never reach the ledger in clear.
pub fn parse_sender(sender: &str, key: &ConsortiumKey) -> Result<SenderRef, Rejection> {
    let s = strip_display_prefix(sender.trim());
    if is_valid_header(s) {
        return Ok(SenderRef::Header(s.to_string()));
    }
    let n = normalize_number(sender).map_err(|_| Rejection::MalformedSender)?;
    Ok(SenderRef::Line(key.keyed_hash(n.as_bytes())))
}

/// Client side of complaint filing.
pub fn file_complaint(
    complaint_id: &str,
    subscriber: Digest,
    sender: &str,
    message_text: &str,
    tick: u64,
    key: &ConsortiumKey,
) -> Result<ComplaintFiledArgs, Rejection> {
    Ok(ComplaintFiledArgs {
        complaint_id: complaint_id.to_string(),
        subscriber,
        sender: parse_sender(sender, key)?,
        message_text: message_text.to_string(),
        received_tick: tick,
    })
}

pub(crate) fn execute_filed(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
) -> Result<(), Rejection> {
    let args: ComplaintFiledArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    if args.complaint_id.is_empty() {
        return Err(Rejection::BadArgs);
    }
    let key = complaint_key(&args.complaint_id);
    if ctx.exists(&key) {
        return Err(Rejection::DuplicateComplaint);
    }
    let (class, verdict) = match &args.sender {
        SenderRef::Header(h) if !is_valid_header(h) => return Err(Rejection::MalformedSender),
        SenderRef::Header(h) if ctx.exists(&header_key(h)) => {
            (ComplaintClass::Rtm, Verdict::Pending)
        }
        SenderRef::Header(_) => (ComplaintClass::Utm, Verdict::UnregisteredSender),
        SenderRef::Line(line) => {
            let mut marker = line_complaint_prefix(line);
            marker.extend_from_slice(args.complaint_id.as_bytes());
            ctx.put(&marker, vec![1]);
            (ComplaintClass::Utm, Verdict::Pending)
        }
    };
    let record = ComplaintRecord {
        complaint_id: args.complaint_id,
        subscriber: args.subscriber,
        sender: args.sender,
        message_text: args.message_text,
        received_tick: args.received_tick,
        class,
        verdict,
        filed_tick: payload.timestamp,
    };
    ctx.put_as(&key, &record);
    Ok(())
}
