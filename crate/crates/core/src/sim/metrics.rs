//! Metric series recomputed from a ledger alone.

use serde::{Deserialize, Serialize};

use crate::campaign::complaint::{load_complaint, ComplaintClass, ComplaintFiledArgs};
use crate::campaign::lifecycle::{
    campaign_id, load_campaign, load_leg, CampaignInitArgs, CampaignStatusArgs, LegOutcome,
};
use crate::ledger::block::Block;
use crate::ledger::chain::{CommitError, Ledger};
use crate::ledger::tx::TxType;
use crate::membership::AdmitArgs;
use crate::scrubbing::token::load_scrub;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("window carries no messages")]
pub struct DivisionWindowEmpty;

/// Complaints per million messages.
pub fn complaints_per_million(complaints: u64, messages: u64) -> Result<f64, DivisionWindowEmpty> {
    if messages == 0 {
        return Err(DivisionWindowEmpty);
    }
    Ok(complaints as f64 * 1e6 / messages as f64)
}

/// Delivered share of the submitted list, in percent.
pub fn success_rate(delivered: u64, submitted: u64) -> Option<f64> {
    (submitted > 0).then(|| delivered as f64 * 100.0 / submitted as f64)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CampaignTotals {
    pub campaign_id: String,
    pub tm_id: String,
    pub header: String,
    pub submitted: u64,
    pub valid: u64,
    pub delivered: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScrubSuccessRow {
    pub campaign_id: String,
    pub tm_id: String,
    pub header: String,
    pub submitted: u64,
    pub valid: u64,
    pub delivered: u64,
    pub success_rate: Option<f64>,
    /// Mean of the defined per-campaign rates up to and including this row.
    pub rolling_rate: Option<f64>,
}

pub fn compute_scrub_success_rate(totals: &[CampaignTotals]) -> Vec<ScrubSuccessRow> {
    let (mut sum, mut n) = (0.0, 0u64);
    totals
        .iter()
        .map(|t| {
            let rate = success_rate(t.delivered, t.submitted);
            if let Some(r) = rate {
                sum += r;
                n += 1;
            }
            ScrubSuccessRow {
                campaign_id: t.campaign_id.clone(),
                tm_id: t.tm_id.clone(),
                header: t.header.clone(),
                submitted: t.submitted,
                valid: t.valid,
                delivered: t.delivered,
                success_rate: rate,
                rolling_rate: (n > 0).then(|| sum / n as f64),
            }
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WindowCounts {
    pub start: u64,
    pub end: u64,
    pub messages: u64,
    pub rtm: u64,
    pub utm: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpmRow {
    pub window_start: u64,
    pub window_end: u64,
    pub messages: u64,
    pub rtm_complaints: u64,
    pub utm_complaints: u64,
    pub rtm_cpm: Option<f64>,
    pub utm_cpm: Option<f64>,
}

/// Windows without messages get empty cells.
pub fn compute_complaints_per_million(windows: &[WindowCounts]) -> Vec<CpmRow> {
    windows
        .iter()
        .map(|w| CpmRow {
            window_start: w.start,
            window_end: w.end,
            messages: w.messages,
            rtm_complaints: w.rtm,
            utm_complaints: w.utm,
            rtm_cpm: complaints_per_million(w.rtm, w.messages).ok(),
            utm_cpm: complaints_per_million(w.utm, w.messages).ok(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub height: u64,
    pub tick: u64,
    pub updates: u64,
    /// Ticks from proposal to commit.
    pub mean_latency: f64,
    pub max_latency: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRow {
    pub window_start: u64,
    pub window_end: u64,
    pub telemarketers: u64,
    pub headers: u64,
    pub templates: u64,
    pub total_telemarketers: u64,
    pub total_headers: u64,
    pub total_templates: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scrub_success: Vec<ScrubSuccessRow>,
    pub complaints_per_million: Vec<CpmRow>,
    pub preference_latency: Vec<LatencyRow>,
    pub registrations: Vec<RegistrationRow>,
}

impl MetricsReport {
    pub fn from_blocks(blocks: &[Block]) -> Result<Self, (u64, CommitError)> {
        Ok(Self::from_ledger(&Ledger::replay(blocks)?))
    }

    pub fn from_ledger(ledger: &Ledger) -> Self {
        let state = ledger.state();
        let w = ledger.params().metrics_window_ticks.max(1);
        let last_tick = ledger.blocks().last().map_or(0, |b| b.timestamp);
        let n_windows = if ledger.height() == 0 {
            0
        } else {
            (last_tick / w + 1) as usize
        };
        let mut windows: Vec<WindowCounts> = (0..n_windows as u64)
            .map(|k| WindowCounts {
                start: k * w,
                end: (k + 1) * w,
                ..Default::default()
            })
            .collect();
        let mut regs = vec![[0u64; 3]; n_windows];
        let mut campaigns = Vec::new();
        let mut latency = Vec::new();
        let slot = |tick: u64| ((tick / w) as usize).min(n_windows.saturating_sub(1));

        for block in ledger.blocks().iter().skip(1) {
            let mut lat = Vec::new();
            for (_, tx) in block.valid_txs() {
                let p = tx.payload();
                match p.tx_type {
                    TxType::CampaignInit => {
                        if let Ok(a) = p.decode_args::<CampaignInitArgs>() {
                            campaigns.push(campaign_id(&a.token_id));
                        }
                    }
                    TxType::CampaignStatus => {
                        if let Ok(CampaignStatusArgs {
                            outcome: LegOutcome::Delivered { delivered, .. },
                            ..
                        }) = p.decode_args()
                        {
                            windows[slot(p.timestamp)].messages += delivered;
                        }
                    }
                    TxType::ComplaintFiled => {
                        let Ok(a) = p.decode_args::<ComplaintFiledArgs>() else {
                            continue;
                        };
                        let Some(rec) = load_complaint(state, &a.complaint_id) else {
                            continue;
                        };
                        let win = &mut windows[slot(a.received_tick)];
                        match rec.class {
                            ComplaintClass::Rtm => win.rtm += 1,
                            ComplaintClass::Utm => win.utm += 1,
                        }
                    }
                    TxType::UpdatePreference => {
                        lat.push(block.timestamp.saturating_sub(p.timestamp))
                    }
                    TxType::RegisterTelemarketer => {
                        if matches!(p.decode_args::<AdmitArgs>(), Ok(AdmitArgs::Register(_))) {
                            regs[slot(block.timestamp)][0] += 1;
                        }
                    }
                    TxType::RegisterHeader => regs[slot(block.timestamp)][1] += 1,
                    TxType::RegisterTemplate | TxType::RegisterConsentTemplate => {
                        regs[slot(block.timestamp)][2] += 1
                    }
                    _ => {}
                }
            }
            if !lat.is_empty() {
                latency.push(LatencyRow {
                    height: block.height,
                    tick: block.timestamp,
                    updates: lat.len() as u64,
                    mean_latency: lat.iter().sum::<u64>() as f64 / lat.len() as f64,
                    max_latency: *lat.iter().max().expect("non-empty"),
                });
            }
        }

        let mut totals = Vec::new();
        for id in campaigns {
            let Some(rec) = load_campaign(state, &id) else {
                continue;
            };
            let legs: Vec<_> = rec
                .legs
                .iter()
                .map(|(op, _)| load_leg(state, &id, op))
                .collect();
            if legs.iter().any(Option::is_none) {
                continue;
            }
            let Some(scrub) = load_scrub(state, &rec.token_id) else {
                continue;
            };
            let delivered = legs
                .iter()
                .flatten()
                .map(|l| match l.outcome {
                    LegOutcome::Delivered { delivered, .. } => delivered,
                    LegOutcome::Rejected { .. } => 0,
                })
                .sum();
            totals.push(CampaignTotals {
                campaign_id: id,
                tm_id: rec.tm_id,
                header: rec.header,
                submitted: scrub.token.counts.input,
                valid: scrub.token.counts.valid,
                delivered,
            });
        }

        let mut cum = [0u64; 3];
        let registrations = windows
            .iter()
            .zip(&regs)
            .map(|(win, r)| {
                for k in 0..3 {
                    cum[k] += r[k];
                }
                RegistrationRow {
                    window_start: win.start,
                    window_end: win.end,
                    telemarketers: r[0],
                    headers: r[1],
                    templates: r[2],
                    total_telemarketers: cum[0],
                    total_headers: cum[1],
                    total_templates: cum[2],
                }
            })
            .collect();

        MetricsReport {
            scrub_success: compute_scrub_success_rate(&totals),
            complaints_per_million: compute_complaints_per_million(&windows),
            preference_latency: latency,
            registrations,
        }
    }

    /// Per-row complaint series split at `tick`: windows ending at or before
    /// it and windows starting at or after it.
    pub fn split_at(&self, tick: u64) -> (Vec<&CpmRow>, Vec<&CpmRow>) {
        let pre = self
            .complaints_per_million
            .iter()
            .filter(|r| r.window_end <= tick)
            .collect();
        let post = self
            .complaints_per_million
            .iter()
            .filter(|r| r.window_start >= tick)
            .collect();
        (pre, post)
    }
}
