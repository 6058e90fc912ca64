use std::time::{Duration, Instant};

use ucc_core::campaign::lifecycle::{campaign_status, CampaignRecord, CampaignStatus};
use ucc_core::ledger::dump::encode_dump;
use ucc_core::ledger::{verify_chain, StateRead};
use ucc_core::sim::config::{FaultConfig, FaultKind, ScenarioConfig};
use ucc_core::sim::runner::{run_scenario, Simulation};
use ucc_core::sim::scenarios::bundled;
use ucc_core::{codec, Ledger};

fn small_honest(ticks: u64) -> ScenarioConfig {
    let mut cfg = bundled("honest").unwrap().unwrap();
    cfg.ticks = ticks;
    cfg.subscribers.count = 3000;
    cfg
}

fn campaigns(ledger: &Ledger) -> Vec<(String, Option<CampaignStatus>)> {
    ledger
        .state()
        .scan_prefix(b"camp/")
        .into_iter()
        .filter_map(|(_, v, _)| codec::decode::<CampaignRecord>(v).ok())
        .map(|c| {
            (
                c.campaign_id.clone(),
                campaign_status(ledger.state(), &c.campaign_id),
            )
        })
        .collect()
}

fn node_ids(cfg: &ScenarioConfig) -> Vec<String> {
    cfg.nodes
        .iter()
        .map(|n| n.id.clone())
        .chain(cfg.telemarketers.iter().map(|t| t.id.clone()))
        .collect()
}

/// Every live node ends on the same chain and state, including the
/// telemarketer admitted mid-run.
fn assert_agreement(sim: &Simulation, cfg: &ScenarioConfig) {
    let reference = sim.ledger_of("observer-1").unwrap();
    assert_eq!(verify_chain(reference.blocks()), Ok(()));
    for id in node_ids(cfg) {
        let l = sim
            .ledger_of(&id)
            .unwrap_or_else(|| panic!("{id} has no ledger"));
        assert_eq!(l.tip_hash(), reference.tip_hash(), "{id}");
        assert_eq!(l.state_hash(), reference.state_hash(), "{id}");
    }
}

#[test]
fn honest_nodes_agree_and_finish_campaigns() {
    let cfg = small_honest(60);
    let mut sim = Simulation::new(&cfg).unwrap();
    sim.run();
    assert_agreement(&sim, &cfg);
    let all = campaigns(sim.ledger_of("observer-1").unwrap());
    assert!(all.len() >= 4, "{all:?}");
    assert!(
        all.iter()
            .all(|(_, s)| *s == Some(CampaignStatus::Completed)),
        "{all:?}"
    );
}

#[test]
fn progress_survives_crash_drop_and_delay() {
    let mut cfg = small_honest(72);
    cfg.faults = vec![
        FaultConfig {
            node: "op-3".into(),
            fault: FaultKind::Crash,
            from: 20,
            to: 40,
        },
        FaultConfig {
            node: "op-1".into(),
            fault: FaultKind::Drop { prob: 0.3 },
            from: 30,
            to: 60,
        },
        FaultConfig {
            node: "op-2".into(),
            fault: FaultKind::Delay { ticks: 3 },
            from: 5,
            to: 50,
        },
    ];
    let mut sim = Simulation::new(&cfg).unwrap();
    sim.run();
    assert!(sim.dropped() > 0);
    assert_agreement(&sim, &cfg);
    let all = campaigns(sim.ledger_of("observer-1").unwrap());
    assert!(all.len() >= 4);
    for (id, s) in &all {
        assert!(
            matches!(
                s,
                Some(CampaignStatus::Completed | CampaignStatus::Rejected)
            ),
            "{id}: {s:?}"
        );
    }
}

#[test]
fn runs_are_reproducible_per_seed() {
    let cfg = small_honest(36);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(encode_dump(&a.blocks), encode_dump(&b.blocks));
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.audits, b.audits);

    let mut other = cfg.clone();
    other.seed += 1;
    let c = run_scenario(&other).unwrap();
    assert_ne!(encode_dump(&a.blocks), encode_dump(&c.blocks));
}

#[test]
fn bad_configs_are_refused() {
    let mut cfg = small_honest(10);
    cfg.faults = vec![FaultConfig {
        node: "op-1".into(),
        fault: FaultKind::Drop { prob: 1.5 },
        from: 0,
        to: 5,
    }];
    assert!(Simulation::new(&cfg).is_err());

    let mut cfg = small_honest(10);
    cfg.faults = vec![FaultConfig {
        node: "op-404".into(),
        fault: FaultKind::Crash,
        from: 0,
        to: 5,
    }];
    assert!(Simulation::new(&cfg).is_err());

    let mut json: serde_json::Value = serde_json::from_str(&small_honest(10).to_json()).unwrap();
    json["unexpected"] = serde_json::json!(1);
    assert!(ScenarioConfig::from_json(&json.to_string()).is_err());
    assert!(ScenarioConfig::from_json("{").is_err());
}

#[test]
fn empty_workload_leaves_only_genesis() {
    let mut cfg = small_honest(30);
    cfg.workload.clear();
    cfg.telemarketers.clear();
    let out = run_scenario(&cfg).unwrap();
    assert_eq!(out.blocks.len(), 1);
    assert!(out.trace.is_empty() && out.audits.is_empty());
    assert!(out.metrics.scrub_success.is_empty());
    assert!(out.metrics.complaints_per_million.is_empty());
    assert!(out.metrics.registrations.is_empty());
}

/// Desk-scale budget for the bundled demo, measured at about 17 s in an
/// unoptimised build.
const DEMO_BUDGET: Duration = Duration::from_secs(120);

#[test]
fn demo_scenario_fits_the_budget() {
    let cfg = bundled("tccpr-demo").unwrap().unwrap();
    assert_eq!(cfg.operators().count(), 7);
    assert_eq!(cfg.telemarketers.len(), 3);
    assert_eq!(cfg.subscribers.count, 10_000);
    let started = Instant::now();
    let out = run_scenario(&cfg).unwrap();
    let took = started.elapsed();
    assert!(took < DEMO_BUDGET, "{took:?}");
    assert!(out.stats.converged);
    assert_eq!(out.stats.campaigns_started, 20);
    assert_eq!(out.metrics.scrub_success.len(), 20);
}
