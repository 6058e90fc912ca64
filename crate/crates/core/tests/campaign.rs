mod common;

use common::{bank_net, commit_scrub, number, request, small_batch, HEADER, TM};
use ucc_core::campaign::audit::{replay_audit, trace_key, AuditError, TraceRow};
use ucc_core::campaign::complaint::{
    file_complaint, load_complaint, ComplaintClass, SenderRef, Verdict,
};
use ucc_core::campaign::lifecycle::{
    campaign_id, campaign_status, execute_campaign, CampaignInitArgs, CampaignStatus,
    CampaignStatusArgs, LegOutcome,
};
use ucc_core::campaign::watchlist::{
    current_action, update_watchlist, DegradedServiceArgs, WatchAction,
};
use ucc_core::contract::Rejection;
use ucc_core::registries::PreferenceMode;
use ucc_core::scrubbing::{verify_scrub_token, ScrubResultArgs};
use ucc_core::sim::devnet::{Devnet, DevnetError, OBSERVER};
use ucc_core::{Digest, TxType};

const MESSAGE: &str = "Dear Asha, your gold card offer is waiting. T&C apply";

fn rejection<T: std::fmt::Debug>(r: Result<T, DevnetError>) -> Rejection {
    r.unwrap_err()
        .rejection()
        .cloned()
        .expect("validator rejection")
}

struct Setup {
    net: Devnet,
    promo: Digest,
    numbers: Vec<String>,
    blocked: String,
    scrub: ScrubResultArgs,
    store: ucc_core::scrubbing::ObjectStore,
}

/// Eight numbers on two operators, one of them fully blocked, scrubbed and
/// committed at tick 10.
fn scrubbed(seed: u64) -> Setup {
    let (mut net, promo, _) = bank_net(seed, 2, small_batch());
    let numbers: Vec<String> = (0..8).map(|i| number(i % 2, i as u64)).collect();
    let blocked = numbers[3].clone();
    let args = net.preference_args("op-2", &blocked, PreferenceMode::FullyBlocked, &[]);
    net.commit("op-2", TxType::UpdatePreference, &args).unwrap();
    net.tick = 10;
    let mut scrubber = net.scrubber();
    let scrub = scrubber
        .scrub(
            &request(&numbers, promo, "Banking", 10),
            &net.mirror(),
            &net.ledger,
        )
        .unwrap();
    commit_scrub(&mut net, &scrub);
    Setup {
        net,
        promo,
        numbers,
        blocked,
        scrub,
        store: scrubber.store,
    }
}

fn init_args(s: &Setup) -> CampaignInitArgs {
    CampaignInitArgs {
        token_id: s.scrub.token.token_id,
        header: HEADER.into(),
        template_id: s.promo,
    }
}

fn report(op: &str, id: &str, attempted: u64, delivered: u64) -> CampaignStatusArgs {
    CampaignStatusArgs {
        campaign_id: id.into(),
        operator: op.into(),
        outcome: LegOutcome::Delivered {
            attempted,
            delivered,
        },
    }
}

#[test]
fn campaign_lifecycle() {
    let mut s = scrubbed(50);
    let id = campaign_id(&s.scrub.token.token_id);
    let wrong_header = CampaignInitArgs {
        header: "OTHERH".into(),
        ..init_args(&s)
    };
    assert_eq!(
        rejection(s.net.commit(TM, TxType::CampaignInit, &wrong_header)),
        Rejection::TokenHeaderMismatch
    );
    let wrong_tpl = CampaignInitArgs {
        template_id: Digest::of(b"nope"),
        ..init_args(&s)
    };
    assert_eq!(
        rejection(s.net.commit(TM, TxType::CampaignInit, &wrong_tpl)),
        Rejection::TokenTemplateMismatch
    );
    let ghost = CampaignInitArgs {
        token_id: [7; 16],
        ..init_args(&s)
    };
    assert_eq!(
        rejection(s.net.commit(TM, TxType::CampaignInit, &ghost)),
        Rejection::TokenNotOnChain
    );
    s.net.add_telemarketer("tm-2", &[], &[]).unwrap();
    assert_eq!(
        rejection(s.net.commit("tm-2", TxType::CampaignInit, &init_args(&s))),
        Rejection::NotDelegated
    );

    s.net
        .commit(TM, TxType::CampaignInit, &init_args(&s))
        .unwrap();
    assert_eq!(
        campaign_status(s.net.ledger.state(), &id),
        Some(CampaignStatus::Queued)
    );
    assert_eq!(
        rejection(s.net.commit(TM, TxType::CampaignInit, &init_args(&s))),
        Rejection::TokenAlreadyConsumed
    );

    let lines = |op: &str| {
        s.scrub
            .token
            .per_operator
            .iter()
            .find(|f| f.recipient == op)
            .unwrap()
            .lines
    };
    let (l1, l2) = (lines("op-1"), lines("op-2"));
    assert_eq!((l1, l2), (4, 3));
    assert_eq!(
        rejection(s.net.commit(
            "op-1",
            TxType::CampaignStatus,
            &report("op-1", &id, l1 + 1, 0)
        )),
        Rejection::InvalidReport
    );
    assert_eq!(
        rejection(
            s.net
                .commit("op-1", TxType::CampaignStatus, &report("op-1", &id, 2, 3))
        ),
        Rejection::InvalidReport
    );
    assert_eq!(
        rejection(
            s.net
                .commit("op-2", TxType::CampaignStatus, &report("op-1", &id, 1, 1))
        ),
        Rejection::WrongOperator
    );
    assert_eq!(
        rejection(s.net.commit(
            "op-1",
            TxType::CampaignStatus,
            &report("op-1", "C-none", 1, 1)
        )),
        Rejection::UnknownCampaign
    );

    s.net
        .commit("op-1", TxType::CampaignStatus, &report("op-1", &id, l1, l1))
        .unwrap();
    assert_eq!(
        campaign_status(s.net.ledger.state(), &id),
        Some(CampaignStatus::InDelivery)
    );
    assert_eq!(
        rejection(
            s.net
                .commit("op-1", TxType::CampaignStatus, &report("op-1", &id, l1, l1))
        ),
        Rejection::LegAlreadyReported
    );
    s.net
        .commit(
            "op-2",
            TxType::CampaignStatus,
            &report("op-2", &id, l2, l2 - 1),
        )
        .unwrap();
    assert_eq!(
        campaign_status(s.net.ledger.state(), &id),
        Some(CampaignStatus::Completed)
    );
}

#[test]
fn rejected_legs_reject_the_campaign() {
    let mut s = scrubbed(51);
    let id = campaign_id(&s.scrub.token.token_id);
    s.net
        .commit(TM, TxType::CampaignInit, &init_args(&s))
        .unwrap();
    for op in ["op-1", "op-2"] {
        let a = CampaignStatusArgs {
            campaign_id: id.clone(),
            operator: op.into(),
            outcome: LegOutcome::Rejected {
                reason: "token".into(),
            },
        };
        s.net.commit(op, TxType::CampaignStatus, &a).unwrap();
    }
    assert_eq!(
        campaign_status(s.net.ledger.state(), &id),
        Some(CampaignStatus::Rejected)
    );
}

#[test]
fn complaint_classification() {
    let (mut net, _, _) = bank_net(52, 2, small_batch());
    let sub = net.subscriber(&number(0, 1));
    let file = |net: &mut Devnet, id: &str, sender: &str| {
        let args = file_complaint(id, sub, sender, "hello", 5, &net.key).unwrap();
        net.commit(OBSERVER, TxType::ComplaintFiled, &args)
            .map(|_| ())
    };
    file(&mut net, "c-1", "VM-STABAN").unwrap();
    file(&mut net, "c-2", "98123 40000").unwrap();
    file(&mut net, "c-3", "QWERTY").unwrap();
    let get = |net: &Devnet, id| load_complaint(net.ledger.state(), id).unwrap();
    let c1 = get(&net, "c-1");
    assert_eq!(
        (c1.class, c1.verdict, c1.sender),
        (
            ComplaintClass::Rtm,
            Verdict::Pending,
            SenderRef::Header(HEADER.into())
        )
    );
    let c2 = get(&net, "c-2");
    assert_eq!(
        (c2.class, c2.verdict),
        (ComplaintClass::Utm, Verdict::Pending)
    );
    assert_eq!(
        c2.sender,
        SenderRef::Line(net.key.keyed_hash(b"919812340000"))
    );
    let c3 = get(&net, "c-3");
    assert_eq!(
        (c3.class, c3.verdict),
        (ComplaintClass::Utm, Verdict::UnregisteredSender)
    );

    assert_eq!(
        file_complaint("c-4", sub, "AB-CD", "x", 5, &net.key).unwrap_err(),
        Rejection::MalformedSender
    );
    assert_eq!(
        rejection(file(&mut net, "c-1", "VM-STABAN")),
        Rejection::DuplicateComplaint
    );
    let forged = ucc_core::campaign::complaint::ComplaintFiledArgs {
        sender: SenderRef::Header("ab".into()),
        ..file_complaint("c-5", sub, "VM-STABAN", "x", 5, &net.key).unwrap()
    };
    assert_eq!(
        rejection(net.commit(OBSERVER, TxType::ComplaintFiled, &forged)),
        Rejection::MalformedSender
    );
}

#[test]
fn watch_list_escalates_at_thresholds() {
    let (mut net, _, _) = bank_net(53, 2, small_batch());
    let line = "9876501234";
    let line_key = net.key.keyed_hash(b"919876501234");
    let thresholds = net.ledger.params().watch_thresholds;
    let mut actions = Vec::new();
    for i in 1..=50u64 {
        let sub = net.subscriber(&number(0, i));
        let args =
            file_complaint(&format!("u-{i}"), sub, line, "win a prize", i, &net.key).unwrap();
        net.commit(OBSERVER, TxType::ComplaintFiled, &args).unwrap();
        if let Some(d) = update_watchlist(net.ledger.state(), &line_key, thresholds) {
            actions.push((i, d.action));
            net.commit(OBSERVER, TxType::DegradedService, &d).unwrap();
        }
        if i == 12 {
            let jump = DegradedServiceArgs {
                line: line_key,
                action: WatchAction::Terminated,
            };
            assert_eq!(
                rejection(net.commit(OBSERVER, TxType::DegradedService, &jump)),
                Rejection::BelowThreshold
            );
            let same = DegradedServiceArgs {
                line: line_key,
                action: WatchAction::Throttled,
            };
            assert_eq!(
                rejection(net.commit(OBSERVER, TxType::DegradedService, &same)),
                Rejection::NotEscalation
            );
        }
    }
    assert_eq!(
        actions,
        vec![
            (10, WatchAction::Throttled),
            (25, WatchAction::Degraded),
            (50, WatchAction::Terminated)
        ]
    );
    assert_eq!(
        current_action(net.ledger.state(), &line_key),
        WatchAction::Terminated
    );
    assert_eq!(
        update_watchlist(net.ledger.state(), &line_key, thresholds),
        None
    );
}

/// Deliver the campaign with certain success and return the trace.
fn deliver(s: &mut Setup) -> (String, Vec<TraceRow>) {
    let id = campaign_id(&s.scrub.token.token_id);
    s.net
        .commit(TM, TxType::CampaignInit, &init_args(s))
        .unwrap();
    let mut trace = Vec::new();
    for op in ["op-1", "op-2"] {
        let kp = s.net.key_of(op).unwrap().clone();
        let lines = verify_scrub_token(op, &kp, &s.scrub.token, &s.net.ledger, &s.store).unwrap();
        let d = execute_campaign(
            s.net.ledger.params(),
            &id,
            op,
            &lines,
            common::PROMO,
            MESSAGE,
            10,
            1.0,
            1,
        )
        .unwrap();
        for (n, ok) in &d.outcomes {
            trace.push(TraceRow {
                campaign_id: id.clone(),
                operator: op.into(),
                hashed_key: trace_key(&s.net.subscriber(n)),
                tick: 10,
                delivered: *ok,
            });
        }
        s.net
            .commit(
                op,
                TxType::CampaignStatus,
                &report(op, &id, d.attempted(), d.delivered()),
            )
            .unwrap();
    }
    (id, trace)
}

#[test]
fn audit_clears_compliant_delivery() {
    let mut s = scrubbed(54);
    let (id, trace) = deliver(&mut s);
    assert_eq!(trace.len(), 7);
    s.net.tick = 11;
    let sub = s.net.subscriber(&s.numbers[0]);
    let args = file_complaint("r-1", sub, "VM-STABAN", MESSAGE, 11, &s.net.key).unwrap();
    s.net
        .commit(OBSERVER, TxType::ComplaintFiled, &args)
        .unwrap();
    let rep = replay_audit(&s.net.ledger, "r-1", &trace).unwrap();
    assert_eq!(
        (rep.verdict, rep.campaign_id),
        (Verdict::Compliant, Some(id))
    );
}

#[test]
fn audit_blames_operator_that_ignored_the_list() {
    let mut s = scrubbed(55);
    let (id, mut trace) = deliver(&mut s);
    let key = s.net.subscriber(&s.blocked);
    assert!(!trace.iter().any(|r| r.hashed_key == trace_key(&key)));
    trace.push(TraceRow {
        campaign_id: id.clone(),
        operator: "op-2".into(),
        hashed_key: trace_key(&key),
        tick: 10,
        delivered: true,
    });
    s.net.tick = 11;
    let args = file_complaint("r-2", key, "VM-STABAN", MESSAGE, 11, &s.net.key).unwrap();
    s.net
        .commit(OBSERVER, TxType::ComplaintFiled, &args)
        .unwrap();
    let rep = replay_audit(&s.net.ledger, "r-2", &trace).unwrap();
    assert_eq!(
        rep.verdict,
        Verdict::Violation {
            operator: Some("op-2".into())
        }
    );
    assert_eq!(rep.campaign_id, Some(id));
}

#[test]
fn audit_of_off_template_message_and_unknowns() {
    let mut s = scrubbed(56);
    let (_, trace) = deliver(&mut s);
    s.net.tick = 11;
    let sub = s.net.subscriber(&s.numbers[0]);
    let args = file_complaint(
        "r-3",
        sub,
        "VM-STABAN",
        "Loan approved, click here",
        11,
        &s.net.key,
    )
    .unwrap();
    s.net
        .commit(OBSERVER, TxType::ComplaintFiled, &args)
        .unwrap();
    let rep = replay_audit(&s.net.ledger, "r-3", &trace).unwrap();
    assert!(matches!(rep.verdict, Verdict::Violation { .. }));

    let args = file_complaint("r-4", sub, "9876501234", "spam", 11, &s.net.key).unwrap();
    s.net
        .commit(OBSERVER, TxType::ComplaintFiled, &args)
        .unwrap();
    let rep = replay_audit(&s.net.ledger, "r-4", &trace).unwrap();
    assert_eq!(
        (rep.class, rep.verdict),
        (ComplaintClass::Utm, Verdict::UnregisteredSender)
    );
    assert_eq!(
        replay_audit(&s.net.ledger, "nope", &trace).unwrap_err(),
        AuditError::UnknownComplaint("nope".into())
    );
}
