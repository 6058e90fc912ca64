//! Complaint replay audits against the ledger and the delivery trace.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::complaint::{load_complaint, ComplaintClass, SenderRef, Verdict};
use super::lifecycle::{
    campaign_id, load_campaign, CampaignInitArgs, CampaignRecord, CampaignStatusArgs,
};
use crate::crypto::Digest;
use crate::ledger::chain::Ledger;
use crate::ledger::tx::TxType;
use crate::registries::read_as;
use crate::registries::template::{match_parsed, parse_template, template_key, TemplateRecord};
use crate::scrubbing::mirror::{is_deliverable, MirrorIndex};
use crate::scrubbing::token::load_scrub;

/// One simulated delivery attempt; the delivery trace CSV row.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TraceRow {
    pub campaign_id: String,
    pub operator: String,
    /// Hex keyed hash of the recipient.
    pub hashed_key: String,
    pub tick: u64,
    pub delivered: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub complaint_id: String,
    pub class: ComplaintClass,
    pub verdict: Verdict,
    pub campaign_id: Option<String>,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuditError {
    #[error("complaint {0} not on chain")]
    UnknownComplaint(String),
    #[error("no candidate campaign and no delivery trace for complaint {0}")]
    InsufficientEvidence(String),
}

struct Candidate {
    campaign: CampaignRecord,
    delivered_by: Option<String>,
    template_match: bool,
    overlap: usize,
    deliverable: bool,
}

/// Highest block whose timestamp is at or before `tick`.
fn block_at_tick(ledger: &Ledger, tick: u64) -> u64 {
    let blocks = ledger.blocks();
    let n = blocks.partition_point(|b| b.timestamp <= tick);
    n.saturating_sub(1) as u64
}

/// Campaign ids touched by CampaignInit or CampaignStatus in blocks `lo..=hi`.
fn campaigns_in_blocks(ledger: &Ledger, lo: u64, hi: u64) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for h in lo..=hi.min(ledger.height()) {
        let Some(b) = ledger.block(h) else { continue };
        for (_, tx) in b.valid_txs() {
            let p = tx.payload();
            match p.tx_type {
                TxType::CampaignInit => {
                    if let Ok(a) = p.decode_args::<CampaignInitArgs>() {
                        out.insert(campaign_id(&a.token_id));
                    }
                }
                TxType::CampaignStatus => {
                    if let Ok(a) = p.decode_args::<CampaignStatusArgs>() {
                        out.insert(a.campaign_id);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Replay the decision behind an RTM complaint. Candidate campaigns are
/// those for the complained-about header that delivered to the subscriber
/// according to the trace, or that have lifecycle transactions within the
/// configured block window around the complaint. For each candidate the
/// deliverability of the subscriber is recomputed against state at the
/// scrub's decision height.
pub fn replay_audit(
    ledger: &Ledger,
    complaint_id: &str,
    trace: &[TraceRow],
) -> Result<AuditReport, AuditError> {
    let state = ledger.state();
    let complaint = load_complaint(state, complaint_id)
        .ok_or_else(|| AuditError::UnknownComplaint(complaint_id.into()))?;
    let header = match (&complaint.class, &complaint.sender) {
        (ComplaintClass::Rtm, SenderRef::Header(h)) => h.clone(),
        _ => {
            return Ok(AuditReport {
                complaint_id: complaint_id.into(),
                class: ComplaintClass::Utm,
                verdict: Verdict::UnregisteredSender,
                campaign_id: None,
                notes: String::new(),
            })
        }
    };
    let subscriber = complaint.subscriber.to_hex();
    let mut ids: BTreeSet<String> = trace
        .iter()
        .filter(|r| r.hashed_key == subscriber && r.delivered && r.tick <= complaint.received_tick)
        .map(|r| r.campaign_id.clone())
        .collect();
    let w = ledger.params().complaint_window_blocks;
    let b = block_at_tick(ledger, complaint.received_tick);
    ids.extend(campaigns_in_blocks(ledger, b.saturating_sub(w), b + w));

    let mut candidates = Vec::new();
    for id in ids {
        let Some(campaign) = load_campaign(state, &id) else {
            continue;
        };
        if campaign.header != header {
            continue;
        }
        let Some(scrub) = load_scrub(state, &campaign.token_id) else {
            continue;
        };
        let delivered_by = trace
            .iter()
            .filter(|r| {
                r.campaign_id == id
                    && r.hashed_key == subscriber
                    && r.delivered
                    && r.tick <= complaint.received_tick
            })
            .map(|r| r.operator.clone())
            .next_back();
        let (template_match, overlap) =
            match read_as::<TemplateRecord>(state, &template_key(&campaign.template_id))
                .and_then(|t| parse_template(&t.text).ok())
            {
                Some(p) => (
                    match_parsed(&p, &complaint.message_text),
                    p.literals
                        .iter()
                        .filter(|l| !l.is_empty() && complaint.message_text.contains(l.as_str()))
                        .map(|l| l.len())
                        .sum(),
                ),
                None => (false, 0),
            };
        let index = MirrorIndex::from_state(&state.at(scrub.token.decision_height));
        let deliverable =
            is_deliverable(&complaint.subscriber, &header, &campaign.category, &index);
        candidates.push(Candidate {
            campaign,
            delivered_by,
            template_match,
            overlap,
            deliverable,
        });
    }
    if candidates.is_empty() {
        return Err(AuditError::InsufficientEvidence(complaint_id.into()));
    }
    candidates.sort_by(|a, b| {
        (b.delivered_by.is_some(), b.template_match, b.overlap)
            .cmp(&(a.delivered_by.is_some(), a.template_match, a.overlap))
            .then_with(|| a.campaign.campaign_id.cmp(&b.campaign.campaign_id))
    });
    let best = &candidates[0];
    let mut notes = Vec::new();
    let ties = candidates
        .iter()
        .skip(1)
        .filter(|c| {
            c.delivered_by.is_some() == best.delivered_by.is_some()
                && c.template_match == best.template_match
                && c.overlap == best.overlap
        })
        .count();
    if ties > 0 {
        notes.push(format!(
            "ambiguous: {ties} other campaign(s) with equal literal overlap"
        ));
    }
    let verdict = if best.delivered_by.is_some() && !best.deliverable {
        notes.push("delivered although not deliverable at decision height".into());
        Verdict::Violation {
            operator: best.delivered_by.clone(),
        }
    } else if !best.template_match {
        notes.push("message matches no candidate template".into());
        Verdict::Violation {
            operator: best.delivered_by.clone(),
        }
    } else {
        Verdict::Compliant
    };
    Ok(AuditReport {
        complaint_id: complaint_id.into(),
        class: ComplaintClass::Rtm,
        verdict,
        campaign_id: Some(best.campaign.campaign_id.clone()),
        notes: notes.join("; "),
    })
}

/// Subscriber digest as written in the trace.
pub fn trace_key(d: &Digest) -> String {
    d.to_hex()
}
