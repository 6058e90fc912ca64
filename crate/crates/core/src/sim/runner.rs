//! Discrete-tick scenario runner. Nodes step in id order; the network is
//! drained in `(tick, send order)` and the orderer cuts at the end of every
//! tick.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use tracing::{debug, info};

use super::config::{FaultKind, ScenarioConfig, TelemarketerConfig, WorkloadEvent};
use super::metrics::MetricsReport;
use super::network::{Envelope, Message, Network};
use super::node::{CampaignPlan, Committed, Node, OwnResult, Purpose, ORDERER};
use super::report::AuditRow;
use super::world::{PendingComplaint, World};
use crate::campaign::audit::{replay_audit, TraceRow};
use crate::campaign::complaint::{file_complaint, ComplaintFiledArgs, ComplaintRecord, SenderRef};
use crate::campaign::lifecycle::{
    campaign_id, execute_campaign, load_leg, CampaignInitArgs, CampaignRecord, CampaignStatusArgs,
    ExecuteError, LegOutcome,
};
use crate::campaign::watchlist::{current_action, update_watchlist, WatchAction};
use crate::codec;
use crate::crypto::{ConsortiumKey, Digest, KeyPair};
use crate::ledger::block::Block;
use crate::ledger::chain::Ledger;
use crate::ledger::genesis::{genesis_block, GenesisArgs, GenesisFile};
use crate::ledger::orderer::{OrderingService, SoloOrderer};
use crate::ledger::policy::PolicyTable;
use crate::ledger::state::StateRead;
use crate::ledger::tx::TxType;
use crate::membership::{
    AdmitArgs, ParticipantIdentity, RegulatorDb, Role, TelemarketerRegistration,
};
use crate::registries::consent::{
    issue_challenge, ConsentChannel, GrantConsentArgs, RequestConsentArgs, RevokeConsentArgs,
};
use crate::registries::header::{DelegateArgs, RegisterHeaderArgs, RegisterPeArgs};
use crate::registries::preference::UpdatePreferenceArgs;
use crate::registries::template::{template_id, RegisterTemplateArgs, TemplateKind};
use crate::registries::Category;
use crate::scrubbing::mirror::MirrorIndex;
use crate::scrubbing::scrub::{ObjectStore, OperatorRouting, ScrubRequest, ScrubToken, Scrubber};
use crate::scrubbing::token::{load_scrub, verify_scrub_token};

use super::config::ConfigInvalid;

const HARNESS: &str = "harness";
/// Leg instructions whose campaign never appears are dropped after this long.
const LEG_PATIENCE_TICKS: u64 = 72;
/// Wait before asking again for a campaign delivery that never arrived.
const LEG_RECOVERY_TICKS: u64 = 8;
/// Every node asks its sync peer for missed blocks this often.
const SYNC_EVERY_TICKS: u64 = 4;
/// Abandoned leg reports are proposed again at most this many times.
const MAX_REPORT_ATTEMPTS: u32 = 24;

pub fn node_key(seed: u64, id: &str) -> KeyPair {
    KeyPair::derive(format!("ucc-sim/{seed}/{id}").as_bytes())
}

/// Subject key of complaints the rate detector files on its own.
pub fn rate_detector_subject(key: &ConsortiumKey) -> Digest {
    key.keyed_hash(b"utm-rate-detector")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub height: u64,
    pub converged: bool,
    pub failed_proposals: usize,
    pub messages_sent: u64,
    pub messages_dropped: u64,
    pub campaigns_started: u64,
    pub scrub_failures: u64,
    pub utm_sends: u64,
}

/// Everything a run produces.
pub struct RunOutput {
    pub genesis: GenesisFile,
    pub blocks: Vec<Block>,
    pub trace: Vec<TraceRow>,
    pub audits: Vec<AuditRow>,
    pub metrics: MetricsReport,
    pub stats: RunStats,
}

struct PendingLeg {
    campaign_id: String,
    token: ScrubToken,
    message: String,
    template_text: String,
    since: u64,
}

struct OperatorState {
    region: String,
    prefixes: Vec<String>,
    store: ObjectStore,
    legs: Vec<PendingLeg>,
    /// Leg reports waiting to be proposed again.
    reports: Vec<(CampaignStatusArgs, u32)>,
    /// Campaigns whose delivery was asked for again, by tick of the request.
    refetched: BTreeMap<String, u64>,
    raw: BTreeMap<String, Vec<String>>,
    subscribers: BTreeMap<Digest, String>,
}

struct TmState {
    cfg: TelemarketerConfig,
    joined: bool,
    active: bool,
    setup: VecDeque<(TxType, Vec<u8>)>,
    deferred: Vec<Message>,
    next_request: u64,
    plans: BTreeMap<u64, CampaignPlan>,
    /// Deliveries sent per campaign, kept for operators that missed them.
    sent: BTreeMap<String, Message>,
}

struct ScrubberState {
    scrubber: Scrubber,
    mirror: MirrorIndex,
    legacy: MirrorIndex,
}

#[derive(Default)]
struct ObserverState {
    store: ObjectStore,
    pending_watch: BTreeSet<Digest>,
}

enum RoleState {
    Operator(Box<OperatorState>),
    Telemarketer(Box<TmState>),
    Scrubber(Box<ScrubberState>),
    Observer(ObserverState),
    Idle,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    net: Network,
    nodes: BTreeMap<String, Node>,
    roles: BTreeMap<String, RoleState>,
    orderer: SoloOrderer,
    world: World,
    genesis: GenesisArgs,
    key: ConsortiumKey,
    regulator: RegulatorDb,
    scrubber_id: String,
    observer_id: String,
    tick: u64,
    stats: RunStats,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigInvalid> {
    let mut sim = Simulation::new(cfg)?;
    sim.run();
    Ok(sim.finish())
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigInvalid> {
        cfg.validate()?;
        let key = ConsortiumKey::new(cfg.consortium_secret.as_bytes().to_vec());
        let world = World::new(cfg, key.clone())?;
        let participants: Vec<ParticipantIdentity> = cfg
            .nodes
            .iter()
            .map(|n| ParticipantIdentity {
                id: n.id.clone(),
                role: n.role,
                public_key: node_key(cfg.seed, &n.id).public(),
                region: n.region.clone(),
                admitted_tick: 0,
                revoked: false,
            })
            .collect();
        let genesis = GenesisArgs {
            participants,
            params: cfg.params.clone(),
            policies: PolicyTable::default(),
        };
        let g = genesis_block(&genesis);
        let regulator = RegulatorDb::from_pairs(
            cfg.telemarketers
                .iter()
                .map(|t| (t.id.clone(), t.receipt.clone()))
                .chain(
                    cfg.regulator
                        .iter()
                        .map(|r| (r.tm_id.clone(), r.receipt.clone())),
                ),
        );
        let observer_id = cfg
            .nodes
            .iter()
            .find(|n| n.role == Role::Observer)
            .expect("validated")
            .id
            .clone();
        let scrubber_id = cfg
            .nodes
            .iter()
            .find(|n| n.role == Role::Scrubber)
            .expect("validated")
            .id
            .clone();
        let peer_of = |id: &str| -> String {
            if id == observer_id {
                cfg.nodes
                    .iter()
                    .find(|n| n.id != id)
                    .map(|n| n.id.clone())
                    .unwrap_or_default()
            } else {
                observer_id.clone()
            }
        };
        let routing = OperatorRouting::new(
            cfg.operators()
                .flat_map(|o| o.prefixes.iter().map(move |p| (p.clone(), o.id.clone()))),
            None,
        );
        let sim_cfg = &cfg.simulation;
        let mut nodes = BTreeMap::new();
        let mut roles = BTreeMap::new();
        for n in &cfg.nodes {
            let kp = node_key(cfg.seed, &n.id);
            let ledger = Ledger::from_genesis(g.clone()).expect("fresh genesis is valid");
            let role = match n.role {
                Role::Operator => RoleState::Operator(Box::new(OperatorState {
                    region: n.region.clone().unwrap_or_default(),
                    prefixes: n.prefixes.clone(),
                    store: ObjectStore::default(),
                    legs: Vec::new(),
                    reports: Vec::new(),
                    refetched: BTreeMap::new(),
                    raw: BTreeMap::new(),
                    subscribers: world
                        .subscribers
                        .iter()
                        .filter(|s| s.operator == n.id)
                        .map(|s| (s.key, s.number.clone()))
                        .collect(),
                })),
                Role::Scrubber => RoleState::Scrubber(Box::new(ScrubberState {
                    scrubber: Scrubber::new(
                        &n.id,
                        kp.clone(),
                        key.clone(),
                        routing.clone(),
                        cfg.seed ^ 0x7363_7275_6200,
                    ),
                    mirror: MirrorIndex::from_state(ledger.state()),
                    legacy: MirrorIndex::from_state(ledger.state()),
                })),
                Role::Observer => RoleState::Observer(ObserverState::default()),
                _ => RoleState::Idle,
            };
            nodes.insert(
                n.id.clone(),
                Node::new(
                    &n.id,
                    n.role,
                    kp,
                    Some(ledger),
                    regulator.clone(),
                    &peer_of(&n.id),
                    sim_cfg.endorse_timeout_ticks,
                    sim_cfg.max_retries,
                ),
            );
            roles.insert(n.id.clone(), role);
        }
        Ok(Simulation {
            net: Network::new(sim_cfg.latency_ticks, cfg.faults.clone(), cfg.seed),
            orderer: SoloOrderer::new(cfg.batch, g.block_hash),
            cfg: cfg.clone(),
            nodes,
            roles,
            world,
            genesis,
            key,
            regulator,
            scrubber_id,
            observer_id,
            tick: 0,
            stats: RunStats::default(),
        })
    }

    pub fn run(&mut self) {
        let horizon = self.cfg.ticks;
        for tick in 0..=horizon {
            self.step(tick, true);
        }
        let limit = horizon + 2 * self.cfg.params.ticks_per_day.max(1);
        let mut tick = horizon + 1;
        while tick <= limit && !self.quiescent() {
            self.step(tick, false);
            tick += 1;
        }
    }

    fn quiescent(&self) -> bool {
        self.net.is_idle()
            && self.orderer.pending_len() == 0
            && self.nodes.values().all(|n| !n.is_busy())
            && self.roles.values().all(|r| match r {
                RoleState::Operator(op) => op.legs.is_empty() && op.reports.is_empty(),
                _ => true,
            })
            && self.heights_agree()
    }

    fn heights_agree(&self) -> bool {
        let mut heights = self
            .nodes
            .values()
            .filter(|n| !self.net.crashed(&n.id, self.tick))
            .map(|n| n.height());
        let first = heights.next().flatten();
        heights.all(|h| h == first)
    }

    fn step(&mut self, tick: u64, scripted: bool) {
        self.tick = tick;
        self.recover_crashed(tick);
        self.drain();
        if scripted {
            self.join_telemarketers(tick);
            self.workload(tick);
            self.utm(tick);
        }
        self.role_steps(tick);
        if tick.is_multiple_of(SYNC_EVERY_TICKS) {
            for (id, node) in self.nodes.iter_mut() {
                if !self.net.crashed(id, tick) {
                    node.request_sync(&mut self.net, tick);
                }
            }
        }
        self.drain();
        let ids: Vec<String> = self.nodes.keys().cloned().collect();
        for id in &ids {
            if !self.net.crashed(id, tick) {
                let node = self.nodes.get_mut(id).expect("listed");
                node.check_deadlines(&mut self.net, tick);
                self.drain_abandoned(id);
            }
        }
        self.drain();
        let blocks = self.orderer.cut(tick);
        for b in blocks {
            let to: Vec<String> = self.nodes.keys().cloned().collect();
            self.net.broadcast(tick, ORDERER, &to, Message::Block(b));
        }
    }

    /// Nodes whose crash window just closed ask a peer for missed blocks.
    fn recover_crashed(&mut self, tick: u64) {
        let recovering: Vec<String> = self
            .cfg
            .faults
            .iter()
            .filter(|f| f.fault == FaultKind::Crash && f.to == tick)
            .map(|f| f.node.clone())
            .collect();
        for id in recovering {
            if let Some(node) = self.nodes.get_mut(&id) {
                node.request_sync(&mut self.net, tick);
            }
        }
    }

    fn drain(&mut self) {
        while let Some(env) = self.net.pop_due(self.tick) {
            self.deliver(env);
        }
    }

    fn deliver(&mut self, env: Envelope) {
        let now = self.tick;
        if env.to == ORDERER {
            if let Message::Submit(tx) = env.message {
                self.orderer.submit(tx, now);
            }
            return;
        }
        if self.net.crashed(&env.to, now) {
            return;
        }
        let Some(node) = self.nodes.get_mut(&env.to) else {
            return;
        };
        match env.message {
            Message::Propose(p) => node.endorse(&mut self.net, now, &env.from, &p),
            m @ (Message::Endorsed { .. } | Message::Refused { .. }) => {
                node.on_response(&mut self.net, now, &env.from, m)
            }
            Message::FetchBlocks { from } => node.serve_fetch(&mut self.net, now, &env.from, from),
            Message::Block(b) => {
                let c = node.receive_blocks(&mut self.net, now, vec![b], false);
                self.after_commits(&env.to, c);
            }
            Message::Blocks(bs) => {
                let c = node.receive_blocks(&mut self.net, now, bs, true);
                self.after_commits(&env.to, c);
                self.maybe_register(&env.to);
            }
            other => self.role_message(&env.to, &env.from, other),
        }
        self.drain_abandoned(&env.to);
    }

    fn propose<A: serde::Serialize>(
        &mut self,
        id: &str,
        tx_type: TxType,
        args: &A,
        purpose: Purpose,
    ) {
        let now = self.tick;
        let node = self.nodes.get_mut(id).expect("known node");
        node.propose(&mut self.net, now, tx_type, codec::encode(args), purpose);
    }

    fn drain_abandoned(&mut self, id: &str) {
        let Some(node) = self.nodes.get_mut(id) else {
            return;
        };
        let abandoned = std::mem::take(&mut node.abandoned);
        for p in abandoned {
            self.on_own(id, OwnResult::abandoned(p));
        }
    }

    // ---- telemarketer onboarding ----

    fn join_telemarketers(&mut self, tick: u64) {
        let joining: Vec<TelemarketerConfig> = self
            .cfg
            .telemarketers
            .iter()
            .filter(|t| t.join_tick == tick)
            .cloned()
            .collect();
        for t in joining {
            let kp = node_key(self.cfg.seed, &t.id);
            let mut node = Node::new(
                &t.id,
                Role::Telemarketer,
                kp,
                None,
                self.regulator.clone(),
                &self.observer_id,
                self.cfg.simulation.endorse_timeout_ticks,
                self.cfg.simulation.max_retries,
            );
            node.request_sync(&mut self.net, tick);
            self.nodes.insert(t.id.clone(), node);
            self.roles.insert(
                t.id.clone(),
                RoleState::Telemarketer(Box::new(TmState {
                    cfg: t,
                    joined: false,
                    active: false,
                    setup: VecDeque::new(),
                    deferred: Vec::new(),
                    next_request: 0,
                    plans: BTreeMap::new(),
                    sent: BTreeMap::new(),
                })),
            );
        }
    }

    /// After the first sync, a telemarketer registers itself and queues its
    /// entity, header and template registrations.
    fn maybe_register(&mut self, id: &str) {
        let Some(RoleState::Telemarketer(tm)) = self.roles.get_mut(id) else {
            return;
        };
        if tm.joined || self.nodes[id].ledger.is_none() {
            return;
        }
        tm.joined = true;
        let c = &tm.cfg;
        let kp = &self.nodes[id].key;
        let reg = TelemarketerRegistration::new(&c.id, &c.receipt, Role::Telemarketer, kp);
        let pe = &c.principal_entity;
        let mut setup: VecDeque<(TxType, Vec<u8>)> = VecDeque::new();
        setup.push_back((
            TxType::RegisterPrincipalEntity,
            codec::encode(&RegisterPeArgs {
                pe_id: pe.pe_id.clone(),
                name: pe.name.clone(),
                documents_ref: pe.documents_ref.clone(),
            }),
        ));
        for h in &c.headers {
            setup.push_back((
                TxType::RegisterHeader,
                codec::encode(&RegisterHeaderArgs {
                    pe_id: pe.pe_id.clone(),
                    header: h.clone(),
                    approved: true,
                }),
            ));
        }
        for h in &c.headers {
            setup.push_back((
                TxType::DelegateHeader,
                codec::encode(&DelegateArgs {
                    header: h.clone(),
                    tm_id: c.id.clone(),
                }),
            ));
        }
        for t in &c.templates {
            let tx = if t.kind == TemplateKind::Consent {
                TxType::RegisterConsentTemplate
            } else {
                TxType::RegisterTemplate
            };
            setup.push_back((
                tx,
                codec::encode(&RegisterTemplateArgs {
                    header: t.header.clone(),
                    text: t.text.clone(),
                    kind: t.kind,
                }),
            ));
        }
        tm.setup = setup;
        self.propose(
            id,
            TxType::RegisterTelemarketer,
            &AdmitArgs::Register(reg),
            Purpose::Setup,
        );
    }

    fn advance_setup(&mut self, id: &str) {
        let Some(RoleState::Telemarketer(tm)) = self.roles.get_mut(id) else {
            return;
        };
        if let Some((tx, args)) = tm.setup.pop_front() {
            let now = self.tick;
            let node = self.nodes.get_mut(id).expect("known node");
            node.propose(&mut self.net, now, tx, args, Purpose::Setup);
            self.drain_abandoned(id);
        } else if !tm.active {
            tm.active = true;
            info!(tm = id, tick = self.tick, "telemarketer active");
            let deferred = std::mem::take(&mut tm.deferred);
            for m in deferred {
                self.role_message(id, HARNESS, m);
            }
        }
    }

    // ---- commit hooks ----

    fn after_commits(&mut self, id: &str, commits: Vec<Committed>) {
        for c in commits {
            self.on_block(id, &c);
            for own in c.own {
                self.on_own(id, own);
            }
        }
    }

    fn on_block(&mut self, id: &str, c: &Committed) {
        let now = self.tick;
        match self.roles.get_mut(id) {
            Some(RoleState::Scrubber(s)) => {
                if s.mirror.apply(&c.outcome.event).is_err() {
                    s.mirror = MirrorIndex::from_state(self.nodes[id].ledger().state());
                }
            }
            Some(RoleState::Operator(op)) => {
                for (_, tx) in c.block.valid_txs() {
                    if tx.payload().tx_type != TxType::RequestConsent {
                        continue;
                    }
                    let Ok(args) = tx.payload().decode_args::<RequestConsentArgs>() else {
                        continue;
                    };
                    let Some(number) = op.subscribers.get(&args.key) else {
                        continue;
                    };
                    let otp = issue_challenge(&args.key, &args.header, &tx.tx_id(), args.channel);
                    let Some(i) = self.world.index_of(number) else {
                        continue;
                    };
                    if self.world.consent_intent.remove(&(i, args.header.clone())) == Some(true) {
                        self.world.subscribers[i]
                            .wishes
                            .consented
                            .insert(args.header.clone());
                        let msg = Message::ConsentResponse {
                            number: number.clone(),
                            header: args.header.clone(),
                            response: otp,
                        };
                        self.net.send(now, HARNESS, id, msg);
                    }
                }
            }
            Some(RoleState::Observer(obs)) => {
                let ledger = self.nodes[id].ledger();
                let thresholds = ledger.params().watch_thresholds;
                let mut proposals = Vec::new();
                for (_, tx) in c.block.valid_txs() {
                    if tx.payload().tx_type != TxType::ComplaintFiled {
                        continue;
                    }
                    let Ok(args) = tx.payload().decode_args::<ComplaintFiledArgs>() else {
                        continue;
                    };
                    let SenderRef::Line(line) = args.sender else {
                        continue;
                    };
                    if obs.pending_watch.contains(&line) {
                        continue;
                    }
                    if let Some(d) = update_watchlist(ledger.state(), &line, thresholds) {
                        obs.pending_watch.insert(line);
                        proposals.push(d);
                    }
                }
                for d in proposals {
                    let line = d.line;
                    self.propose(id, TxType::DegradedService, &d, Purpose::Watch { line });
                }
            }
            _ => {}
        }
    }

    fn on_own(&mut self, id: &str, own: OwnResult) {
        let now = self.tick;
        match own.purpose {
            Purpose::Plain => {}
            Purpose::LegReport { args, attempt } => {
                if own.tx.is_none() && attempt < MAX_REPORT_ATTEMPTS {
                    if let Some(RoleState::Operator(op)) = self.roles.get_mut(id) {
                        op.reports.push((*args, attempt + 1));
                    }
                }
            }
            Purpose::Setup => self.advance_setup(id),
            Purpose::Watch { line } => {
                if let Some(RoleState::Observer(obs)) = self.roles.get_mut(id) {
                    obs.pending_watch.remove(&line);
                }
            }
            Purpose::Scrub {
                request_id,
                tm,
                args,
            } => {
                if !own.valid {
                    let reason = "scrub result not committed".to_string();
                    self.net
                        .send(now, id, &tm, Message::ScrubFailed { request_id, reason });
                    return;
                }
                let Some(RoleState::Scrubber(s)) = self.roles.get(id) else {
                    return;
                };
                let files = args
                    .token
                    .per_operator
                    .iter()
                    .chain(args.token.invalid_file.iter());
                let mut out = Vec::new();
                for f in files {
                    if let Some(bytes) = s.scrubber.store.get(&f.locator) {
                        out.push((
                            f.recipient.clone(),
                            Message::Files {
                                blobs: vec![(f.locator.clone(), bytes.to_vec())],
                            },
                        ));
                    }
                }
                for (to, m) in out {
                    self.net.send(now, id, &to, m);
                }
                self.net.send(
                    now,
                    id,
                    &tm,
                    Message::Token {
                        request_id,
                        args: *args,
                    },
                );
            }
            Purpose::CampaignInit { request_id } => {
                let Some(RoleState::Telemarketer(tm)) = self.roles.get_mut(id) else {
                    return;
                };
                let Some(plan) = tm.plans.remove(&request_id) else {
                    return;
                };
                let Some(tx) = own.tx.filter(|_| own.valid) else {
                    return;
                };
                let Ok(args) = tx.payload().decode_args::<CampaignInitArgs>() else {
                    return;
                };
                let Some(scrub) = load_scrub(self.nodes[id].ledger().state(), &args.token_id)
                else {
                    return;
                };
                let cid = campaign_id(&args.token_id);
                self.stats.campaigns_started += 1;
                let mut recipients: BTreeSet<String> = scrub
                    .token
                    .per_operator
                    .iter()
                    .map(|f| f.recipient.clone())
                    .collect();
                for op in self.net.bypass_nodes() {
                    let raw = Message::RawList {
                        campaign_id: cid.clone(),
                        numbers: plan.numbers.clone(),
                    };
                    self.net.send(now, id, &op, raw);
                    recipients.insert(op);
                }
                let m = Message::Deliver {
                    campaign_id: cid.clone(),
                    token: scrub.token.clone(),
                    message: plan.message.clone(),
                    template_text: plan.template_text.clone(),
                };
                for op in recipients {
                    self.net.send(now, id, &op, m.clone());
                }
                if let Some(RoleState::Telemarketer(tm)) = self.roles.get_mut(id) {
                    tm.sent.insert(cid, m);
                }
            }
        }
    }

    // ---- role messages ----

    fn role_message(&mut self, id: &str, from: &str, msg: Message) {
        let now = self.tick;
        let Some(role) = self.roles.get_mut(id) else {
            return;
        };
        match (role, msg) {
            (
                RoleState::Scrubber(s),
                Message::Scrub {
                    request_id,
                    request,
                },
            ) => {
                let node = &self.nodes[id];
                let ledger = node.ledger();
                let index = if request.requested_at < ledger.params().enforcement_tick {
                    &s.legacy
                } else {
                    &s.mirror
                };
                match s.scrubber.scrub(&request, index, ledger) {
                    Ok(args) => {
                        let purpose = Purpose::Scrub {
                            request_id,
                            tm: from.to_string(),
                            args: Box::new(args.clone()),
                        };
                        self.propose(id, TxType::ScrubResult, &args, purpose);
                    }
                    Err(e) => {
                        self.net.send(
                            now,
                            id,
                            from,
                            Message::ScrubFailed {
                                request_id,
                                reason: e.to_string(),
                            },
                        );
                    }
                }
            }
            (RoleState::Telemarketer(tm), Message::FetchLeg { campaign_id }) => {
                if let Some(m) = tm.sent.get(&campaign_id) {
                    self.net.send(now, id, from, m.clone());
                }
            }
            (RoleState::Scrubber(s), Message::FetchFiles { locators }) => {
                let blobs: Vec<_> = locators
                    .into_iter()
                    .filter_map(|l| s.scrubber.store.get(&l).map(|b| (l, b.to_vec())))
                    .collect();
                if !blobs.is_empty() {
                    self.net.send(now, id, from, Message::Files { blobs });
                }
            }
            (RoleState::Telemarketer(tm), Message::ScrubFailed { request_id, reason }) => {
                debug!(tm = id, request_id, %reason, "scrub failed");
                tm.plans.remove(&request_id);
                self.stats.scrub_failures += 1;
            }
            (RoleState::Telemarketer(tm), Message::Token { request_id, args }) => {
                if !tm.plans.contains_key(&request_id) {
                    return;
                }
                let init = CampaignInitArgs {
                    token_id: args.token.token_id,
                    header: args.header,
                    template_id: args.template_id,
                };
                self.propose(
                    id,
                    TxType::CampaignInit,
                    &init,
                    Purpose::CampaignInit { request_id },
                );
            }
            (
                RoleState::Telemarketer(tm),
                m @ (Message::StartCampaign(_) | Message::RequestConsent { .. }),
            ) if !tm.active => {
                tm.deferred.push(m);
            }
            (RoleState::Telemarketer(tm), Message::StartCampaign(plan)) => {
                let request_id = tm.next_request;
                tm.next_request += 1;
                let request = ScrubRequest {
                    tm_id: id.to_string(),
                    header: plan.header.clone(),
                    template_id: plan.template_id,
                    category: plan.category.clone(),
                    numbers: plan.numbers.clone(),
                    requested_at: now,
                };
                tm.plans.insert(request_id, plan);
                let to = self.scrubber_id.clone();
                self.net.send(
                    now,
                    id,
                    &to,
                    Message::Scrub {
                        request_id,
                        request,
                    },
                );
            }
            (
                RoleState::Telemarketer(_),
                Message::RequestConsent {
                    number,
                    header,
                    template,
                },
            ) => {
                let key = self.key.keyed_hash(number.as_bytes());
                let args = RequestConsentArgs {
                    key,
                    header,
                    consent_template_id: template,
                    channel: ConsentChannel::Otp,
                };
                self.propose(id, TxType::RequestConsent, &args, Purpose::Plain);
            }
            (RoleState::Operator(op), Message::Files { blobs }) => {
                for (locator, bytes) in blobs {
                    if op.store.put(bytes) != locator {
                        debug!(operator = id, %locator, "blob does not match its locator");
                    }
                }
            }
            (RoleState::Observer(obs), Message::Files { blobs }) => {
                for (_, bytes) in blobs {
                    obs.store.put(bytes);
                }
            }
            (
                RoleState::Operator(op),
                Message::Deliver {
                    campaign_id,
                    token,
                    message,
                    template_text,
                },
            ) => {
                op.legs.push(PendingLeg {
                    campaign_id,
                    token,
                    message,
                    template_text,
                    since: now,
                });
            }
            (
                RoleState::Operator(op),
                Message::RawList {
                    campaign_id,
                    numbers,
                },
            ) => {
                op.raw.insert(campaign_id, numbers);
            }
            (
                RoleState::Operator(_),
                Message::SetPreference {
                    number,
                    mode,
                    blocked,
                    block_consented,
                },
            ) => {
                let args = UpdatePreferenceArgs {
                    key: self.key.keyed_hash(number.as_bytes()),
                    operator: id.to_string(),
                    mode,
                    blocked,
                    block_consented,
                };
                self.propose(id, TxType::UpdatePreference, &args, Purpose::Plain);
            }
            (
                RoleState::Operator(_),
                Message::ConsentResponse {
                    number,
                    header,
                    response,
                },
            ) => {
                let args = GrantConsentArgs {
                    key: self.key.keyed_hash(number.as_bytes()),
                    header,
                    response,
                };
                self.propose(id, TxType::GrantConsent, &args, Purpose::Plain);
            }
            (RoleState::Operator(_), Message::RevokeConsent { number, header }) => {
                let args = RevokeConsentArgs {
                    key: self.key.keyed_hash(number.as_bytes()),
                    header,
                };
                self.propose(id, TxType::RevokeConsent, &args, Purpose::Plain);
            }
            (
                RoleState::Operator(_) | RoleState::Observer(_),
                Message::Complain {
                    complaint_id,
                    number,
                    sender,
                    message,
                    received_tick,
                },
            ) => {
                let subject = if number.is_empty() {
                    rate_detector_subject(&self.key)
                } else {
                    self.key.keyed_hash(number.as_bytes())
                };
                match file_complaint(
                    &complaint_id,
                    subject,
                    &sender,
                    &message,
                    received_tick,
                    &self.key,
                ) {
                    Ok(args) => self.propose(id, TxType::ComplaintFiled, &args, Purpose::Plain),
                    Err(e) => debug!(node = id, %complaint_id, error = %e, "complaint not filed"),
                }
            }
            (_, m) => {
                debug!(node = id, from, message = ?std::mem::discriminant(&m), "message ignored")
            }
        }
    }

    // ---- per-tick behaviour ----

    fn role_steps(&mut self, tick: u64) {
        let ids: Vec<String> = self.roles.keys().cloned().collect();
        for id in ids {
            if self.net.crashed(&id, tick) {
                continue;
            }
            match self.roles.get_mut(&id) {
                Some(RoleState::Scrubber(s)) => {
                    if tick.is_multiple_of(self.cfg.simulation.legacy_sync_ticks) {
                        s.legacy = s.mirror.clone();
                    }
                }
                Some(RoleState::Operator(_)) => {
                    self.resend_reports(&id);
                    if tick.is_multiple_of(SYNC_EVERY_TICKS) {
                        self.recover_legs(&id, tick);
                    }
                    self.run_legs(&id, tick);
                }
                _ => {}
            }
            self.drain_abandoned(&id);
        }
    }

    fn resend_reports(&mut self, id: &str) {
        let Some(RoleState::Operator(op)) = self.roles.get_mut(id) else {
            return;
        };
        let reports = std::mem::take(&mut op.reports);
        let state = self.nodes[id].ledger().state();
        let due: Vec<_> = reports
            .into_iter()
            .filter(|(s, _)| load_leg(state, &s.campaign_id, &s.operator).is_none())
            .collect();
        for (s, attempt) in due {
            self.propose(
                id,
                TxType::CampaignStatus,
                &s,
                Purpose::LegReport {
                    args: Box::new(s.clone()),
                    attempt,
                },
            );
        }
    }

    /// Ask again for any committed campaign leg this operator owes a report
    /// on but never received, along with its file if that is missing too.
    fn recover_legs(&mut self, id: &str, now: u64) {
        let ledger = self.nodes[id].ledger();
        let Some(RoleState::Operator(op)) = self.roles.get_mut(id) else {
            return;
        };
        let state = ledger.state();
        let mut requests = Vec::new();
        for (_, v, _) in state.scan_prefix(b"camp/") {
            let Ok(rec) = codec::decode::<CampaignRecord>(v) else {
                continue;
            };
            let cid = &rec.campaign_id;
            if !rec.legs.iter().any(|(o, _)| o == id)
                || now < rec.created_tick + LEG_RECOVERY_TICKS
                || load_leg(state, cid, id).is_some()
                || op.legs.iter().any(|l| &l.campaign_id == cid)
                || op.reports.iter().any(|(r, _)| &r.campaign_id == cid)
                || op
                    .refetched
                    .get(cid)
                    .is_some_and(|t| now < t + LEG_RECOVERY_TICKS)
            {
                continue;
            }
            op.refetched.insert(cid.clone(), now);
            let missing: Vec<String> = load_scrub(state, &rec.token_id)
                .into_iter()
                .flat_map(|s| s.token.per_operator)
                .filter(|f| f.recipient == id && op.store.get(&f.locator).is_none())
                .map(|f| f.locator)
                .collect();
            requests.push((rec.tm_id, cid.clone(), missing));
        }
        for (tm, campaign_id, locators) in requests {
            debug!(operator = id, campaign = %campaign_id, "asking for a missed delivery");
            if !locators.is_empty() {
                let to = self.scrubber_id.clone();
                self.net
                    .send(now, id, &to, Message::FetchFiles { locators });
            }
            self.net
                .send(now, id, &tm, Message::FetchLeg { campaign_id });
        }
    }

    fn run_legs(&mut self, id: &str, now: u64) {
        let ledger = self.nodes[id].ledger();
        if !ledger.params().in_delivery_window(now) {
            return;
        }
        let params = ledger.params().clone();
        let Some(RoleState::Operator(op)) = self.roles.get_mut(id) else {
            return;
        };
        let legs = std::mem::take(&mut op.legs);
        let sim = &self.cfg.simulation;
        let mut statuses = Vec::new();
        let mut complaints: Vec<PendingComplaint> = Vec::new();
        for leg in legs {
            let Some(record) = load_scrub(ledger.state(), &leg.token.token_id) else {
                if now - leg.since < LEG_PATIENCE_TICKS {
                    op.legs.push(leg);
                }
                continue;
            };
            let lines = if self.net.bypassing(id, now) {
                match op.raw.remove(&leg.campaign_id) {
                    Some(raw) => raw
                        .into_iter()
                        .filter(|n| op.prefixes.iter().any(|p| n.starts_with(p.as_str())))
                        .collect(),
                    None => {
                        verify_scrub_token(id, &self.nodes[id].key, &leg.token, ledger, &op.store)
                            .unwrap_or_default()
                    }
                }
            } else {
                match verify_scrub_token(id, &self.nodes[id].key, &leg.token, ledger, &op.store) {
                    Ok(lines) => lines,
                    Err(e) => {
                        debug!(operator = id, campaign = %leg.campaign_id, error = %e, "token rejected");
                        continue;
                    }
                }
            };
            let leg_lines = leg
                .token
                .per_operator
                .iter()
                .find(|f| f.recipient == id)
                .map(|f| f.lines);
            let outcome = match execute_campaign(
                &params,
                &leg.campaign_id,
                id,
                &lines,
                &leg.template_text,
                &leg.message,
                now,
                sim.delivery_prob,
                self.cfg.seed,
            ) {
                Ok(d) => {
                    complaints.extend(self.world.record_delivery(
                        &leg.campaign_id,
                        id,
                        &op.region,
                        &record.header,
                        &record.category,
                        &leg.message,
                        &d.outcomes,
                        now,
                        sim.blocked_complaint_prob,
                        sim.noise_complaint_prob,
                    ));
                    leg_lines.map(|n| {
                        let attempted = d.attempted().min(n);
                        LegOutcome::Delivered {
                            attempted,
                            delivered: d.delivered().min(attempted),
                        }
                    })
                }
                Err(ExecuteError::TemplateMismatch) => leg_lines.map(|_| LegOutcome::Rejected {
                    reason: "template mismatch".into(),
                }),
                Err(ExecuteError::OutsideWindow(_)) => {
                    op.legs.push(leg);
                    continue;
                }
            };
            if let Some(outcome) = outcome {
                statuses.push(CampaignStatusArgs {
                    campaign_id: leg.campaign_id.clone(),
                    operator: id.to_string(),
                    outcome,
                });
            }
        }
        for s in statuses {
            self.propose(
                id,
                TxType::CampaignStatus,
                &s,
                Purpose::LegReport {
                    args: Box::new(s.clone()),
                    attempt: 0,
                },
            );
        }
        let delay = self.cfg.simulation.complaint_delay_ticks;
        for c in complaints {
            let m = Message::Complain {
                complaint_id: c.complaint_id,
                number: c.number,
                sender: c.sender,
                message: c.message,
                received_tick: c.received_tick,
            };
            self.net.send(now + delay, HARNESS, &c.operator, m);
        }
    }

    // ---- workload ----

    fn send_to_operator(&mut self, i: usize, msg: Message) {
        let op = self.world.subscribers[i].operator.clone();
        self.net.send(self.tick, HARNESS, &op, msg);
    }

    fn workload(&mut self, now: u64) {
        let events = self.cfg.workload.clone();
        for ev in &events {
            match ev {
                WorkloadEvent::Preference {
                    tick,
                    select,
                    mode,
                    blocked,
                    block_consented,
                } if *tick == now => {
                    for i in self.world.select(select) {
                        self.world.set_wishes(i, *mode, blocked, *block_consented);
                        let number = self.world.subscribers[i].number.clone();
                        let m = Message::SetPreference {
                            number,
                            mode: *mode,
                            blocked: blocked.clone(),
                            block_consented: *block_consented,
                        };
                        self.send_to_operator(i, m);
                    }
                }
                WorkloadEvent::PreferenceChurn {
                    from,
                    to,
                    every,
                    count,
                    categories,
                } if (*from..*to).contains(&now) && (now - from).is_multiple_of(*every) => {
                    for i in self.world.select(&super::config::Selection::Random(*count)) {
                        let (mode, blocked) = self.world.random_preference(categories);
                        self.world.set_wishes(i, mode, &blocked, false);
                        let number = self.world.subscribers[i].number.clone();
                        self.send_to_operator(
                            i,
                            Message::SetPreference {
                                number,
                                mode,
                                blocked,
                                block_consented: false,
                            },
                        );
                    }
                }
                WorkloadEvent::Consent {
                    tick,
                    tm,
                    header,
                    template,
                    select,
                    grant,
                } if *tick == now => {
                    let text = &self.cfg.template(tm, template).expect("validated").text;
                    let tid = template_id(header, text);
                    for i in self.world.select(select) {
                        self.world
                            .consent_intent
                            .insert((i, header.clone()), *grant);
                        let number = self.world.subscribers[i].number.clone();
                        let m = Message::RequestConsent {
                            number,
                            header: header.clone(),
                            template: tid,
                        };
                        self.net.send(now, HARNESS, tm, m);
                    }
                }
                WorkloadEvent::RevokeConsent {
                    tick,
                    header,
                    select,
                } if *tick == now => {
                    for i in self.world.select(select) {
                        self.world.subscribers[i].wishes.consented.remove(header);
                        let number = self.world.subscribers[i].number.clone();
                        self.send_to_operator(
                            i,
                            Message::RevokeConsent {
                                number,
                                header: header.clone(),
                            },
                        );
                    }
                }
                WorkloadEvent::Campaign {
                    tick,
                    tm,
                    header,
                    template,
                    category,
                    message,
                    select,
                    repeat_every,
                    repeat_until,
                } => {
                    let fires = *tick == now
                        || repeat_every.is_some_and(|e| {
                            now > *tick
                                && (now - tick).is_multiple_of(e)
                                && now <= repeat_until.unwrap_or(u64::MAX)
                        });
                    if !fires {
                        continue;
                    }
                    let text = self
                        .cfg
                        .template(tm, template)
                        .expect("validated")
                        .text
                        .clone();
                    let numbers = self
                        .world
                        .select(select)
                        .into_iter()
                        .map(|i| self.world.subscribers[i].number.clone())
                        .collect();
                    let plan = CampaignPlan {
                        header: header.clone(),
                        template_id: template_id(header, &text),
                        template_text: text,
                        category: Category::parse(category).expect("validated"),
                        message: message.clone(),
                        numbers,
                    };
                    self.net
                        .send(now, HARNESS, tm, Message::StartCampaign(plan));
                }
                WorkloadEvent::Complaint {
                    tick,
                    select,
                    sender,
                    message,
                } if *tick == now => {
                    for i in self.world.select(select) {
                        let complaint_id = self.world.next_complaint_id();
                        let number = self.world.subscribers[i].number.clone();
                        let m = Message::Complain {
                            complaint_id,
                            number,
                            sender: sender.clone(),
                            message: message.clone(),
                            received_tick: now,
                        };
                        self.send_to_operator(i, m);
                    }
                }
                _ => {}
            }
        }
    }

    /// Unregistered lines send peer-to-peer once a day at midday. Watch-list
    /// actions cut their volume; recipients complain at the event's rate.
    fn utm(&mut self, now: u64) {
        let tpd = self.cfg.params.ticks_per_day.max(1);
        let events: Vec<_> = self
            .cfg
            .workload
            .iter()
            .enumerate()
            .filter_map(|(k, e)| match e {
                WorkloadEvent::Utm {
                    from,
                    to,
                    initial_lines,
                    new_lines_per_day,
                    daily_sends,
                    complaint_prob,
                } => Some((
                    k,
                    *from,
                    *to,
                    *initial_lines,
                    *new_lines_per_day,
                    *daily_sends,
                    *complaint_prob,
                )),
                _ => None,
            })
            .collect();
        for (k, from, to, initial, per_day, daily, prob) in events {
            if !(from..to).contains(&now) {
                continue;
            }
            if (now - from).is_multiple_of(tpd) {
                self.world
                    .add_utm_lines(k, if now == from { initial } else { per_day });
            }
            if now % tpd != tpd / 2 {
                continue;
            }
            let lines: Vec<_> = self
                .world
                .utm_lines
                .iter()
                .filter(|l| l.source == k)
                .cloned()
                .collect();
            let observer = self.nodes[&self.observer_id].ledger();
            let actions: Vec<WatchAction> = lines
                .iter()
                .map(|l| current_action(observer.state(), &l.key))
                .collect();
            for (line, action) in lines.iter().zip(actions) {
                let sends = match action {
                    WatchAction::None => daily,
                    WatchAction::Throttled => daily / 2,
                    WatchAction::Degraded => daily / 10,
                    WatchAction::Terminated => 0,
                };
                self.world.utm_sends += sends;
                let national = line.number[2..].to_string();
                if self.world.detector.record(line.key, now, sends) {
                    let m = Message::Complain {
                        complaint_id: self.world.next_complaint_id(),
                        number: String::new(),
                        sender: national.clone(),
                        message: "daily send cap exceeded".into(),
                        received_tick: now,
                    };
                    let to = self.observer_id.clone();
                    self.net.send(now, HARNESS, &to, m);
                }
                for _ in 0..sends {
                    if rand::Rng::gen::<f64>(&mut self.world.rng) >= prob {
                        continue;
                    }
                    let i =
                        rand::Rng::gen_range(&mut self.world.rng, 0..self.world.subscribers.len());
                    let m = Message::Complain {
                        complaint_id: self.world.next_complaint_id(),
                        number: self.world.subscribers[i].number.clone(),
                        sender: national.clone(),
                        message: "Congratulations! You won a prize, call back to claim".into(),
                        received_tick: now,
                    };
                    let op = self.world.subscribers[i].operator.clone();
                    self.net.send(
                        now + self.cfg.simulation.complaint_delay_ticks,
                        HARNESS,
                        &op,
                        m,
                    );
                }
            }
        }
    }

    // ---- results ----

    fn finish(mut self) -> RunOutput {
        let reference = &self.nodes[&self.observer_id];
        let ledger = reference.ledger();
        let end = self.tick;
        self.stats.height = ledger.height();
        self.stats.converged = self
            .nodes
            .values()
            .filter(|n| !self.net.crashed(&n.id, end))
            .all(|n| {
                n.ledger.as_ref().is_some_and(|l| {
                    l.height() == ledger.height() && l.tip_hash() == ledger.tip_hash()
                })
            });
        self.stats.failed_proposals = self.nodes.values().map(|n| n.failures.len()).sum();
        self.stats.messages_sent = self.net.sent;
        self.stats.messages_dropped = self.net.dropped;
        self.stats.utm_sends = self.world.utm_sends;
        let mut trace = std::mem::take(&mut self.world.trace);
        trace.sort();
        let audits = audit_all(ledger, &trace);
        RunOutput {
            genesis: GenesisFile::from_args(&self.genesis),
            blocks: ledger.blocks().to_vec(),
            metrics: MetricsReport::from_ledger(ledger),
            trace,
            audits,
            stats: self.stats,
        }
    }

    pub fn ledger_of(&self, id: &str) -> Option<&Ledger> {
        self.nodes.get(id).and_then(|n| n.ledger.as_ref())
    }

    /// Messages lost to drop faults so far.
    pub fn dropped(&self) -> u64 {
        self.net.dropped
    }
}

/// Audit every complaint on chain, in id order.
pub fn audit_all(ledger: &Ledger, trace: &[TraceRow]) -> Vec<AuditRow> {
    let ids: Vec<String> = ledger
        .state()
        .scan_prefix(b"cmp/")
        .into_iter()
        .filter_map(|(_, v, _)| codec::decode::<ComplaintRecord>(v).ok())
        .map(|r| r.complaint_id)
        .collect();
    ids.iter()
        .map(|id| match replay_audit(ledger, id, trace) {
            Ok(r) => AuditRow::from_report(&r),
            Err(e) => AuditRow::insufficient(id, &e.to_string()),
        })
        .collect()
}
