//! Ground truth the harness keeps outside the ledger: subscriber numbers,
//! their actual wishes, and the unregistered senders.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::config::{ConfigInvalid, ScenarioConfig, Selection};
use crate::campaign::audit::TraceRow;
use crate::campaign::rate::RateDetector;
use crate::crypto::{ConsortiumKey, Digest};
use crate::registries::{Category, PreferenceMode};

#[derive(Clone, Debug, Default)]
pub struct Wishes {
    pub mode: Option<PreferenceMode>,
    pub blocked: BTreeSet<Category>,
    pub block_consented: bool,
    pub consented: BTreeSet<String>,
}

impl Wishes {
    /// Same rule the registry applies, over what the subscriber actually
    /// wants right now.
    pub fn wants(&self, header: &str, category: &Category) -> bool {
        let fully_blocked = self.mode == Some(PreferenceMode::FullyBlocked);
        let consented = self.consented.contains(header);
        let allows = !fully_blocked && !self.blocked.iter().any(|b| b.covers(category));
        (consented && !(fully_blocked && self.block_consented)) || allows
    }
}

#[derive(Clone, Debug)]
pub struct Subscriber {
    pub number: String,
    pub key: Digest,
    pub operator: String,
    pub wishes: Wishes,
}

#[derive(Clone, Debug)]
pub struct UtmLine {
    /// Index of the workload event that created the line.
    pub source: usize,
    pub number: String,
    pub key: Digest,
}

/// A complaint the world decided to file, with its delivery target.
#[derive(Clone, Debug)]
pub struct PendingComplaint {
    pub complaint_id: String,
    pub number: String,
    pub operator: String,
    pub sender: String,
    pub message: String,
    pub received_tick: u64,
}

pub struct World {
    pub subscribers: Vec<Subscriber>,
    by_number: BTreeMap<String, usize>,
    pub rng: ChaCha20Rng,
    pub trace: Vec<TraceRow>,
    complaint_seq: u64,
    /// (subscriber, header) pairs that will answer a consent request.
    pub consent_intent: BTreeMap<(usize, String), bool>,
    pub utm_lines: Vec<UtmLine>,
    pub detector: RateDetector,
    pub utm_sends: u64,
    key: ConsortiumKey,
}

/// Subscriber `i` belongs to operator `i mod n`, on one of its prefixes,
/// with the index as the remaining digits.
pub fn subscriber_numbers(cfg: &ScenarioConfig) -> Result<Vec<(String, String)>, ConfigInvalid> {
    let ops: Vec<_> = cfg.operators().collect();
    let mut out = Vec::with_capacity(cfg.subscribers.count);
    let mut seen = BTreeSet::new();
    for i in 0..cfg.subscribers.count {
        let op = ops[i % ops.len()];
        let prefix = &op.prefixes[(i / ops.len()) % op.prefixes.len()];
        let width = 12 - prefix.len();
        let number = format!("{prefix}{i:0width$}");
        if number.len() != 12 || !seen.insert(number.clone()) {
            return Err(ConfigInvalid(format!(
                "prefix {prefix} of {} cannot hold {} subscribers",
                op.id, cfg.subscribers.count
            )));
        }
        out.push((number, op.id.clone()));
    }
    Ok(out)
}

impl World {
    pub fn new(cfg: &ScenarioConfig, key: ConsortiumKey) -> Result<Self, ConfigInvalid> {
        let subscribers: Vec<Subscriber> = subscriber_numbers(cfg)?
            .into_iter()
            .map(|(number, operator)| Subscriber {
                key: key.keyed_hash(number.as_bytes()),
                number,
                operator,
                wishes: Wishes::default(),
            })
            .collect();
        let by_number = subscribers
            .iter()
            .enumerate()
            .map(|(i, s)| (s.number.clone(), i))
            .collect();
        Ok(World {
            subscribers,
            by_number,
            rng: ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x776f_726c_6400),
            trace: Vec::new(),
            complaint_seq: 0,
            consent_intent: BTreeMap::new(),
            utm_lines: Vec::new(),
            detector: RateDetector::new(cfg.params.utm_daily_cap, cfg.params.ticks_per_day),
            utm_sends: 0,
            key,
        })
    }

    pub fn index_of(&self, number: &str) -> Option<usize> {
        self.by_number.get(number).copied()
    }

    pub fn select(&mut self, s: &Selection) -> Vec<usize> {
        let n = self.subscribers.len();
        match s {
            Selection::All => (0..n).collect(),
            Selection::First(k) => (0..(*k).min(n)).collect(),
            Selection::Range(a, b) => (*a..(*b).min(n)).collect(),
            Selection::Random(k) => {
                let mut v = sample(&mut self.rng, n, (*k).min(n)).into_vec();
                v.sort_unstable();
                v
            }
            Selection::Index(v) => v.iter().copied().filter(|i| *i < n).collect(),
        }
    }

    pub fn next_complaint_id(&mut self) -> String {
        self.complaint_seq += 1;
        format!("K{:07}", self.complaint_seq)
    }

    pub fn key(&self) -> &ConsortiumKey {
        &self.key
    }

    /// Record one operator leg in the trace and decide which recipients
    /// complain.
    #[allow(clippy::too_many_arguments)]
    pub fn record_delivery(
        &mut self,
        campaign_id: &str,
        operator: &str,
        display: &str,
        header: &str,
        category: &Category,
        message: &str,
        outcomes: &[(String, bool)],
        tick: u64,
        blocked_prob: f64,
        noise_prob: f64,
    ) -> Vec<PendingComplaint> {
        let mut complaints = Vec::new();
        for (number, delivered) in outcomes {
            let key = self.key.keyed_hash(number.as_bytes());
            self.trace.push(TraceRow {
                campaign_id: campaign_id.to_string(),
                operator: operator.to_string(),
                hashed_key: key.to_hex(),
                tick,
                delivered: *delivered,
            });
            if !*delivered {
                continue;
            }
            let Some(i) = self.index_of(number) else {
                continue;
            };
            let p = if self.subscribers[i].wishes.wants(header, category) {
                noise_prob
            } else {
                blocked_prob
            };
            if self.rng.gen::<f64>() < p {
                let complaint_id = self.next_complaint_id();
                complaints.push(PendingComplaint {
                    complaint_id,
                    number: number.clone(),
                    operator: self.subscribers[i].operator.clone(),
                    sender: format!("{display}-{header}"),
                    message: message.to_string(),
                    received_tick: tick,
                });
            }
        }
        complaints
    }

    /// A random preference over `categories`.
    pub fn random_preference(&mut self, categories: &[String]) -> (PreferenceMode, Vec<String>) {
        let roll = self.rng.gen::<f64>();
        if roll < 0.1 {
            (PreferenceMode::FullyOpen, Vec::new())
        } else if roll < 0.3 || categories.is_empty() {
            (PreferenceMode::FullyBlocked, Vec::new())
        } else {
            let k = 1 + self.rng.gen_range(0..categories.len().min(2));
            let mut picked: Vec<String> = sample(&mut self.rng, categories.len(), k)
                .into_iter()
                .map(|j| categories[j].clone())
                .collect();
            picked.sort();
            (PreferenceMode::Partial, picked)
        }
    }

    pub fn set_wishes(
        &mut self,
        i: usize,
        mode: PreferenceMode,
        blocked: &[String],
        block_consented: bool,
    ) {
        let w = &mut self.subscribers[i].wishes;
        w.mode = Some(mode);
        w.blocked = blocked
            .iter()
            .filter_map(|c| Category::parse(c).ok())
            .collect();
        w.block_consented = block_consented;
    }

    pub fn add_utm_lines(&mut self, source: usize, n: usize) {
        for _ in 0..n {
            let k = self.utm_lines.len();
            let number = format!("91700{k:07}");
            self.utm_lines.push(UtmLine {
                source,
                key: self.key.keyed_hash(number.as_bytes()),
                number,
            });
        }
    }
}
