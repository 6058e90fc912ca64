//! Campaign lifecycle: token submission, per-operator legs and delivery.
//!
//! Each operator leg is its own key (`leg/<campaign>/<operator>`), so legs
//! reported in the same block do not conflict. Status is derived from them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::contract::Rejection;
use crate::crypto::{self, Digest, KeyPair, PublicKey, Signature};
use crate::ledger::rwset::TxContext;
use crate::ledger::state::StateRead;
use crate::ledger::tx::TransactionPayload;
use crate::params::ConsortiumParams;
use crate::registries::header::is_delegated;
use crate::registries::{match_template, read_as, Category};
use crate::scrubbing::scrub::ScrubResultArgs;
use crate::scrubbing::token::scrub_key;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Queued,
    InDelivery,
    Completed,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub campaign_id: String,
    pub tm_id: String,
    pub header: String,
    pub template_id: Digest,
    pub category: Category,
    pub token_id: [u8; 16],
    /// Operator and file line count for each leg, from the token.
    pub legs: Vec<(String, u64)>,
    pub created_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LegOutcome {
    Delivered { attempted: u64, delivered: u64 },
    Rejected { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegRecord {
    pub outcome: LegOutcome,
    pub reported_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignInitArgs {
    pub token_id: [u8; 16],
    pub header: String,
    pub template_id: Digest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignStatusArgs {
    pub campaign_id: String,
    pub operator: String,
    pub outcome: LegOutcome,
}

pub fn campaign_id(token_id: &[u8; 16]) -> String {
    format!("C-{}", hex::encode(token_id))
}

pub fn campaign_key(id: &str) -> Vec<u8> {
    format!("camp/{id}").into_bytes()
}

pub fn leg_key(id: &str, operator: &str) -> Vec<u8> {
    format!("leg/{id}/{operator}").into_bytes()
}

pub fn load_campaign(state: &dyn StateRead, id: &str) -> Option<CampaignRecord> {
    read_as(state, &campaign_key(id))
}

pub fn load_leg(state: &dyn StateRead, id: &str, operator: &str) -> Option<LegRecord> {
    read_as(state, &leg_key(id, operator))
}

/// Status implied by the reported legs: queued until the first report,
/// completed once every leg has reported and at least one delivered.
pub fn campaign_status(state: &dyn StateRead, id: &str) -> Option<CampaignStatus> {
    let rec = load_campaign(state, id)?;
    let legs: Vec<Option<LegRecord>> = rec
        .legs
        .iter()
        .map(|(op, _)| load_leg(state, id, op))
        .collect();
    let reported = legs.iter().flatten().count();
    Some(if reported == 0 {
        CampaignStatus::Queued
    } else if reported < legs.len() {
        CampaignStatus::InDelivery
    } else if legs
        .iter()
        .flatten()
        .any(|l| matches!(l.outcome, LegOutcome::Delivered { .. }))
    {
        CampaignStatus::Completed
    } else {
        CampaignStatus::Rejected
    })
}

pub(crate) fn execute_init(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
) -> Result<(), Rejection> {
    let args: CampaignInitArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let scrub: ScrubResultArgs = ctx
        .get_as(&scrub_key(&args.token_id))
        .ok_or(Rejection::TokenNotOnChain)?;
    if scrub.tm_id != payload.proposer || !is_delegated(ctx, &scrub.header, &payload.proposer) {
        return Err(Rejection::NotDelegated);
    }
    if scrub.header != args.header {
        return Err(Rejection::TokenHeaderMismatch);
    }
    if scrub.template_id != args.template_id {
        return Err(Rejection::TokenTemplateMismatch);
    }
    let id = campaign_id(&args.token_id);
    let key = campaign_key(&id);
    if ctx.exists(&key) {
        return Err(Rejection::TokenAlreadyConsumed);
    }
    let record = CampaignRecord {
        campaign_id: id,
        tm_id: payload.proposer.clone(),
        header: scrub.header,
        template_id: scrub.template_id,
        category: scrub.category,
        token_id: args.token_id,
        legs: scrub
            .token
            .per_operator
            .iter()
            .map(|f| (f.recipient.clone(), f.lines))
            .collect(),
        created_tick: payload.timestamp,
    };
    ctx.put_as(&key, &record);
    Ok(())
}

pub(crate) fn execute_status(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
) -> Result<(), Rejection> {
    let args: CampaignStatusArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    if args.operator != payload.proposer {
        return Err(Rejection::WrongOperator);
    }
    let rec: CampaignRecord = ctx
        .get_as(&campaign_key(&args.campaign_id))
        .ok_or(Rejection::UnknownCampaign)?;
    let lines = rec
        .legs
        .iter()
        .find(|(op, _)| *op == args.operator)
        .map(|(_, n)| *n)
        .ok_or(Rejection::UnknownLeg)?;
    let key = leg_key(&args.campaign_id, &args.operator);
    if ctx.exists(&key) {
        return Err(Rejection::LegAlreadyReported);
    }
    if let LegOutcome::Delivered {
        attempted,
        delivered,
    } = args.outcome
    {
        if delivered > attempted || attempted > lines {
            return Err(Rejection::InvalidReport);
        }
    }
    ctx.put_as(
        &key,
        &LegRecord {
            outcome: args.outcome,
            reported_tick: payload.timestamp,
        },
    );
    Ok(())
}

/// Signed delivery report handed by an operator to the telemarketer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub campaign_id: String,
    pub operator: String,
    pub attempted: u64,
    pub delivered: u64,
    pub signature: Signature,
}

impl DeliveryReport {
    fn message(campaign_id: &str, operator: &str, attempted: u64, delivered: u64) -> Vec<u8> {
        crate::codec::encode(&(
            "ucc-delivery-report",
            campaign_id,
            operator,
            attempted,
            delivered,
        ))
    }

    pub fn sign(
        campaign_id: &str,
        operator: &str,
        attempted: u64,
        delivered: u64,
        key: &KeyPair,
    ) -> Self {
        let signature = key.sign(&Self::message(campaign_id, operator, attempted, delivered));
        DeliveryReport {
            campaign_id: campaign_id.into(),
            operator: operator.into(),
            attempted,
            delivered,
            signature,
        }
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        crypto::verify(
            key,
            &Self::message(
                &self.campaign_id,
                &self.operator,
                self.attempted,
                self.delivered,
            ),
            &self.signature,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecuteError {
    #[error("message does not match the registered template")]
    TemplateMismatch,
    #[error("tick {0} is outside the delivery window")]
    OutsideWindow(u64),
}

/// Per-number delivery outcome for one operator leg.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub outcomes: Vec<(String, bool)>,
}

impl Delivery {
    pub fn attempted(&self) -> u64 {
        self.outcomes.len() as u64
    }

    pub fn delivered(&self) -> u64 {
        self.outcomes.iter().filter(|(_, ok)| *ok).count() as u64
    }
}

/// Seed of the delivery coin flips for one leg.
pub fn delivery_seed(seed: u64, campaign_id: &str, operator: &str) -> [u8; 32] {
    Digest::of_parts(&[
        b"ucc-delivery",
        &seed.to_be_bytes(),
        campaign_id.as_bytes(),
        operator.as_bytes(),
    ])
    .0
}

/// Simulated delivery of `lines` with independent success probability `p`.
#[allow(clippy::too_many_arguments)]
pub fn execute_campaign(
    params: &ConsortiumParams,
    campaign_id: &str,
    operator: &str,
    lines: &[String],
    template_text: &str,
    message: &str,
    tick: u64,
    p: f64,
    seed: u64,
) -> Result<Delivery, ExecuteError> {
    if !params.in_delivery_window(tick) {
        return Err(ExecuteError::OutsideWindow(tick));
    }
    if !match_template(template_text, message) {
        return Err(ExecuteError::TemplateMismatch);
    }
    let mut rng = ChaCha20Rng::from_seed(delivery_seed(seed, campaign_id, operator));
    let outcomes = lines
        .iter()
        .map(|n| (n.clone(), rng.gen::<f64>() < p))
        .collect();
    Ok(Delivery { outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    const TPL: &str = "Hi <%..%>, sale at <%..%>";

    fn lines(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("91900{i:07}")).collect()
    }

    #[test]
    fn certain_delivery_delivers_everything() {
        let d = execute_campaign(
            &ConsortiumParams::default(),
            "C-1",
            "op-1",
            &lines(9900),
            TPL,
            "Hi A, sale at B",
            10,
            1.0,
            7,
        )
        .unwrap();
        assert_eq!((d.attempted(), d.delivered()), (9900, 9900));
    }

    #[test]
    fn mismatch_and_window() {
        let p = ConsortiumParams::default();
        assert_eq!(
            execute_campaign(
                &p,
                "C-1",
                "op-1",
                &lines(3),
                TPL,
                "Hello A, sale at B",
                10,
                1.0,
                7
            ),
            Err(ExecuteError::TemplateMismatch)
        );
        assert_eq!(
            execute_campaign(
                &p,
                "C-1",
                "op-1",
                &lines(3),
                TPL,
                "Hi A, sale at B",
                22,
                1.0,
                7
            ),
            Err(ExecuteError::OutsideWindow(22))
        );
    }

    #[test]
    fn seeded_bernoulli_matches_independent_rerun() {
        let d = execute_campaign(
            &ConsortiumParams::default(),
            "C-9",
            "op-2",
            &lines(1000),
            TPL,
            "Hi A, sale at B",
            12,
            0.98,
            42,
        )
        .unwrap();
        // Rebuild the stream from raw 64-bit draws: f64 in [0,1) from the top 53 bits.
        let mut rng = ChaCha20Rng::from_seed(delivery_seed(42, "C-9", "op-2"));
        let expected = (0..1000)
            .filter(|_| ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) < 0.98)
            .count() as u64;
        assert_eq!(d.delivered(), expected);
        assert!(expected > 950 && expected < 1000);
    }

    #[test]
    fn delivery_report_signature() {
        let k = KeyPair::derive(b"op-1");
        let r = DeliveryReport::sign("C-1", "op-1", 10, 9, &k);
        assert!(r.verify(&k.public()));
        let mut bad = r.clone();
        bad.delivered = 10;
        assert!(!bad.verify(&k.public()));
    }
}
