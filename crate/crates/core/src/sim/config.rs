//! Scenario files: participants, workload script, faults and parameters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ledger::orderer::BatchConfig;
use crate::membership::Role;
use crate::params::ConsortiumParams;
use crate::registries::header::is_valid_header;
use crate::registries::template::{match_template, parse_template, TemplateKind};
use crate::registries::{Category, PreferenceMode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid scenario: {0}")]
pub struct ConfigInvalid(pub String);

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigInvalid> {
    Err(ConfigInvalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    /// Last tick simulated (inclusive).
    pub ticks: u64,
    pub consortium_secret: String,
    #[serde(default)]
    pub params: ConsortiumParams,
    #[serde(default = "sim_batch")]
    pub batch: BatchConfig,
    /// Genesis-bootstrapped participants.
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub telemarketers: Vec<TelemarketerConfig>,
    /// Regulator fixture rows beyond the telemarketers' own receipts.
    #[serde(default)]
    pub regulator: Vec<RegulatorRow>,
    pub subscribers: SubscriberConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub workload: Vec<WorkloadEvent>,
    #[serde(default)]
    pub faults: Vec<FaultConfig>,
}

fn sim_batch() -> BatchConfig {
    BatchConfig {
        max_batch_size: 200,
        batch_timeout: 0,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub role: Role,
    /// Two-letter display prefix / circle tag (operators).
    #[serde(default)]
    pub region: Option<String>,
    /// Normalized number prefixes served (operators).
    #[serde(default)]
    pub prefixes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegulatorRow {
    pub tm_id: String,
    pub receipt: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemarketerConfig {
    pub id: String,
    pub receipt: String,
    #[serde(default)]
    pub join_tick: u64,
    pub principal_entity: PrincipalEntityConfig,
    pub headers: Vec<String>,
    #[serde(default)]
    pub templates: Vec<TemplateConfig>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrincipalEntityConfig {
    pub pe_id: String,
    pub name: String,
    #[serde(default)]
    pub documents_ref: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    pub name: String,
    pub header: String,
    pub text: String,
    pub kind: TemplateKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscriberConfig {
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub delivery_prob: f64,
    /// Chance a subscriber complains about a message they did not want.
    pub blocked_complaint_prob: f64,
    /// Chance a subscriber complains about a message they did want.
    pub noise_complaint_prob: f64,
    pub complaint_delay_ticks: u64,
    /// Refresh period of the scrubber's index before enforcement.
    pub legacy_sync_ticks: u64,
    pub endorse_timeout_ticks: u64,
    pub max_retries: u32,
    pub latency_ticks: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            delivery_prob: 1.0,
            blocked_complaint_prob: 0.3,
            noise_complaint_prob: 0.0005,
            complaint_delay_ticks: 1,
            legacy_sync_ticks: 168,
            endorse_timeout_ticks: 2,
            max_retries: 3,
            latency_ticks: 0,
        }
    }
}

/// Which subscribers an event applies to (indices into the population).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    All,
    First(usize),
    Range(usize, usize),
    Random(usize),
    Index(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadEvent {
    Preference {
        tick: u64,
        select: Selection,
        mode: PreferenceMode,
        #[serde(default)]
        blocked: Vec<String>,
        #[serde(default)]
        block_consented: bool,
    },
    /// Every `every` ticks in `[from, to)`, `count` random subscribers pick a
    /// new preference over `categories`.
    PreferenceChurn {
        from: u64,
        to: u64,
        every: u64,
        count: usize,
        categories: Vec<String>,
    },
    Consent {
        tick: u64,
        tm: String,
        header: String,
        template: String,
        select: Selection,
        #[serde(default = "yes")]
        grant: bool,
    },
    RevokeConsent {
        tick: u64,
        header: String,
        select: Selection,
    },
    Campaign {
        tick: u64,
        tm: String,
        header: String,
        template: String,
        category: String,
        message: String,
        select: Selection,
        #[serde(default)]
        repeat_every: Option<u64>,
        #[serde(default)]
        repeat_until: Option<u64>,
    },
    /// Unregistered senders: `initial_lines` lines at `from`, `new_lines_per_day`
    /// more each day, each sending `daily_sends` messages a day.
    Utm {
        from: u64,
        to: u64,
        initial_lines: usize,
        new_lines_per_day: usize,
        daily_sends: u64,
        complaint_prob: f64,
    },
    Complaint {
        tick: u64,
        select: Selection,
        sender: String,
        message: String,
    },
}

fn yes() -> bool {
    true
}

impl WorkloadEvent {
    pub fn first_tick(&self) -> u64 {
        match self {
            WorkloadEvent::Preference { tick, .. }
            | WorkloadEvent::Consent { tick, .. }
            | WorkloadEvent::RevokeConsent { tick, .. }
            | WorkloadEvent::Campaign { tick, .. }
            | WorkloadEvent::Complaint { tick, .. } => *tick,
            WorkloadEvent::PreferenceChurn { from, .. } | WorkloadEvent::Utm { from, .. } => *from,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FaultKind {
    /// Messages to the node arrive `ticks` late.
    Delay { ticks: u64 },
    /// Messages to the node are lost with probability `prob`.
    Drop { prob: f64 },
    /// The node processes nothing and catches up afterwards.
    Crash,
    /// The operator delivers the telemarketer's raw list without checking
    /// the scrub token.
    BypassTokenVerification,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultConfig {
    pub node: String,
    pub fault: FaultKind,
    pub from: u64,
    pub to: u64,
}

impl FaultConfig {
    pub fn active(&self, tick: u64) -> bool {
        tick >= self.from && tick < self.to
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigInvalid> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn operators(&self) -> impl Iterator<Item = &NodeConfig> {
        self.nodes.iter().filter(|n| n.role == Role::Operator)
    }

    pub fn template(&self, tm: &str, name: &str) -> Option<&TemplateConfig> {
        self.telemarketers
            .iter()
            .find(|t| t.id == tm)?
            .templates
            .iter()
            .find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if n.id.is_empty() || !ids.insert(n.id.as_str()) {
                return invalid(format!("duplicate or empty node id {:?}", n.id));
            }
            if matches!(n.role, Role::Telemarketer) {
                return invalid(format!(
                    "{}: telemarketers join through `telemarketers`",
                    n.id
                ));
            }
            if n.role == Role::Operator {
                if n.prefixes.is_empty() {
                    return invalid(format!("operator {} has no number prefixes", n.id));
                }
                match &n.region {
                    Some(r) if r.len() == 2 && r.bytes().all(|b| b.is_ascii_uppercase()) => {}
                    _ => return invalid(format!("operator {} needs a two-letter region", n.id)),
                }
                for p in &n.prefixes {
                    if !p.starts_with("91")
                        || p.len() < 3
                        || p.len() > 11
                        || !p.bytes().all(|b| b.is_ascii_digit())
                    {
                        return invalid(format!("operator {}: bad prefix {p:?}", n.id));
                    }
                }
            }
        }
        for role in [Role::Operator, Role::Scrubber, Role::Observer] {
            if !self.nodes.iter().any(|n| n.role == role) {
                return invalid(format!("scenario needs at least one {role}"));
            }
        }
        let mut headers = BTreeSet::new();
        for tm in &self.telemarketers {
            if !ids.insert(tm.id.as_str()) {
                return invalid(format!("duplicate participant id {:?}", tm.id));
            }
            for h in &tm.headers {
                if !is_valid_header(h) || !headers.insert(h.as_str()) {
                    return invalid(format!("{}: bad or duplicate header {h:?}", tm.id));
                }
            }
            for t in &tm.templates {
                if !tm.headers.contains(&t.header) {
                    return invalid(format!(
                        "template {} uses header {} not owned by {}",
                        t.name, t.header, tm.id
                    ));
                }
                if parse_template(&t.text).is_err() {
                    return invalid(format!("template {} has malformed placeholders", t.name));
                }
            }
        }
        if self.subscribers.count == 0 {
            return invalid("subscribers.count must be positive");
        }
        let p = &self.simulation;
        for (name, v) in [
            ("delivery_prob", p.delivery_prob),
            ("blocked_complaint_prob", p.blocked_complaint_prob),
            ("noise_complaint_prob", p.noise_complaint_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1]"));
            }
        }
        if p.legacy_sync_ticks == 0 || self.params.ticks_per_day == 0 {
            return invalid("legacy_sync_ticks and ticks_per_day must be positive");
        }
        for ev in &self.workload {
            self.validate_event(ev)?;
        }
        for f in &self.faults {
            if !ids.contains(f.node.as_str()) {
                return invalid(format!("fault names unknown node {}", f.node));
            }
            if f.from > f.to {
                return invalid(format!("fault on {} has from > to", f.node));
            }
            match f.fault {
                FaultKind::Drop { prob } if !(0.0..=1.0).contains(&prob) => {
                    return invalid("drop prob must lie in [0, 1]")
                }
                FaultKind::BypassTokenVerification
                    if !self
                        .nodes
                        .iter()
                        .any(|n| n.id == f.node && n.role == Role::Operator) =>
                {
                    return invalid(format!("bypass fault on non-operator {}", f.node))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn validate_selection(&self, s: &Selection) -> Result<(), ConfigInvalid> {
        let n = self.subscribers.count;
        let ok = match s {
            Selection::All => true,
            Selection::First(k) | Selection::Random(k) => *k <= n,
            Selection::Range(a, b) => a <= b && *b <= n,
            Selection::Index(v) => v.iter().all(|i| *i < n),
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("selection {s:?} exceeds {n} subscribers"))
        }
    }

    fn validate_event(&self, ev: &WorkloadEvent) -> Result<(), ConfigInvalid> {
        let cats = |cs: &[String]| -> Result<(), ConfigInvalid> {
            for c in cs {
                if Category::parse(c).is_err() {
                    return invalid(format!("unknown category {c:?}"));
                }
            }
            Ok(())
        };
        match ev {
            WorkloadEvent::Preference {
                select, blocked, ..
            } => {
                self.validate_selection(select)?;
                cats(blocked)
            }
            WorkloadEvent::PreferenceChurn {
                from,
                to,
                every,
                count,
                categories,
            } => {
                if *every == 0 || from > to || *count > self.subscribers.count {
                    return invalid(
                        "preference_churn needs every > 0, from <= to and count <= subscribers",
                    );
                }
                cats(categories)
            }
            WorkloadEvent::Consent {
                tm,
                header,
                template,
                select,
                ..
            } => {
                self.validate_selection(select)?;
                match self.template(tm, template) {
                    Some(t) if t.kind == TemplateKind::Consent && &t.header == header => Ok(()),
                    _ => invalid(format!(
                        "consent event: {tm} has no consent template {template} for {header}"
                    )),
                }
            }
            WorkloadEvent::RevokeConsent { select, .. } => self.validate_selection(select),
            WorkloadEvent::Campaign {
                tm,
                header,
                template,
                category,
                message,
                select,
                repeat_every,
                ..
            } => {
                self.validate_selection(select)?;
                cats(std::slice::from_ref(category))?;
                if *repeat_every == Some(0) {
                    return invalid("repeat_every must be positive");
                }
                match self.template(tm, template) {
                    Some(t) if t.kind != TemplateKind::Consent && &t.header == header && match_template(&t.text, message) => Ok(()),
                    _ => invalid(format!("campaign event: {tm} has no template {template} for {header} matching the message")),
                }
            }
            WorkloadEvent::Utm {
                from,
                to,
                complaint_prob,
                ..
            } => {
                if from > to || !(0.0..=1.0).contains(complaint_prob) {
                    return invalid("utm event needs from <= to and complaint_prob in [0, 1]");
                }
                Ok(())
            }
            WorkloadEvent::Complaint { select, .. } => self.validate_selection(select),
        }
    }
}
