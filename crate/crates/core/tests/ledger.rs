mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{number, small_batch};
use ucc_core::contract::{execute, ExecEnv};
use ucc_core::ledger::chain::nonce_key;
use ucc_core::ledger::dump::{decode_dump, encode_dump, verify_dump, ChainCheck};
use ucc_core::ledger::{
    verify_chain, CommitError, CommitOutcome, InvalidReason, TxContext, Version,
};
use ucc_core::registries::PreferenceMode;
use ucc_core::sim::devnet::Devnet;
use ucc_core::{codec, Block, EndorsedTx, Ledger, TxType};

fn seal(net: &mut Devnet, txs: Vec<EndorsedTx>) -> Result<CommitOutcome, CommitError> {
    let block = Block::new(
        net.ledger.height() + 1,
        net.ledger.tip_hash(),
        net.tick,
        txs,
    );
    net.ledger.commit(block)
}

fn queue_pref(net: &mut Devnet, i: u64, mode: PreferenceMode, blocked: &[&str]) {
    let args = net.preference_args("op-1", &number(0, i), mode, blocked);
    net.submit("op-1", TxType::UpdatePreference, &args).unwrap();
}

fn random_mode(rng: &mut ChaCha8Rng) -> (PreferenceMode, Vec<&'static str>) {
    match rng.gen_range(0..3) {
        0 => (PreferenceMode::FullyBlocked, vec![]),
        1 => (
            PreferenceMode::Partial,
            vec!["Health", "Banking"][..rng.gen_range(1..=2)].to_vec(),
        ),
        _ => (PreferenceMode::FullyOpen, vec![]),
    }
}

#[test]
fn replayed_transaction_is_stale() {
    let mut net = Devnet::new(3, 3, small_batch());
    queue_pref(&mut net, 1, PreferenceMode::FullyBlocked, &[]);
    let txs = net.take_pending();
    let first = seal(&mut net, txs.clone()).unwrap();
    assert!(first.invalid.is_empty());
    let again = seal(&mut net, txs).unwrap();
    assert_eq!(again.invalid, vec![(0, InvalidReason::StaleNonce)]);
}

#[test]
fn same_key_in_one_block_conflicts() {
    let mut net = Devnet::new(4, 3, small_batch());
    queue_pref(&mut net, 7, PreferenceMode::FullyBlocked, &[]);
    queue_pref(&mut net, 7, PreferenceMode::FullyOpen, &[]);
    queue_pref(&mut net, 8, PreferenceMode::FullyOpen, &[]);
    let out = net.cut();
    assert_eq!(out.flags, vec![true, false, true]);
    assert_eq!(out.invalid, vec![(1, InvalidReason::MvccConflict)]);
}

#[test]
fn forged_endorsement_invalidates_only_that_tx() {
    let mut net = Devnet::new(5, 3, small_batch());
    for i in 0..3 {
        queue_pref(&mut net, i, PreferenceMode::FullyBlocked, &[]);
    }
    let mut txs = net.take_pending();
    txs[1].endorsements[0].signature.0[5] ^= 0x40;
    let out = seal(&mut net, txs).unwrap();
    assert_eq!(out.invalid, vec![(1, InvalidReason::BadEndorsement)]);
    assert_eq!(out.flags, vec![true, false, true]);
}

#[test]
fn forged_proposer_signature_is_rejected() {
    let mut net = Devnet::new(5, 3, small_batch());
    queue_pref(&mut net, 0, PreferenceMode::FullyBlocked, &[]);
    let mut txs = net.take_pending();
    txs[0].proposal.signature.0[0] ^= 1;
    let out = seal(&mut net, txs).unwrap();
    assert_eq!(out.invalid, vec![(0, InvalidReason::BadProposerSignature)]);
}

#[test]
fn missing_endorsements_fail_policy() {
    let mut net = Devnet::new(5, 3, small_batch());
    queue_pref(&mut net, 0, PreferenceMode::FullyBlocked, &[]);
    let mut txs = net.take_pending();
    txs[0].endorsements.clear();
    let out = seal(&mut net, txs).unwrap();
    assert_eq!(out.invalid, vec![(0, InvalidReason::PolicyNotSatisfied)]);
}

#[test]
fn block_off_the_tip_is_refused() {
    let mut net = Devnet::new(6, 3, small_batch());
    queue_pref(&mut net, 0, PreferenceMode::FullyBlocked, &[]);
    net.cut();
    let stale = Block::new(2, net.ledger.block(0).unwrap().block_hash, 0, vec![]);
    assert!(matches!(
        net.ledger.commit(stale),
        Err(CommitError::BrokenChain { height: 2 })
    ));
    let skip = Block::new(5, net.ledger.tip_hash(), 0, vec![]);
    assert!(matches!(
        net.ledger.commit(skip),
        Err(CommitError::HeightMismatch {
            expected: 2,
            found: 5
        })
    ));
    assert_eq!(net.ledger.height(), 1);
}

/// Valid transactions of a block applied one after another against the
/// pre-block state must give the committed state, and every invalid one must
/// have read something an earlier valid one wrote.
#[test]
fn commit_is_conflict_serializable() {
    let mut net = Devnet::new(9, 2, small_batch());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e71a1);
    for round in 0..40 {
        let mut oracle = net.ledger.state().clone();
        let n = rng.gen_range(2..8);
        for _ in 0..n {
            let (mode, blocked) = random_mode(&mut rng);
            queue_pref(&mut net, rng.gen_range(0..4), mode, &blocked);
        }
        let txs = net.take_pending();
        let out = seal(&mut net, txs.clone()).unwrap();
        let h = out.height;
        let mut written = std::collections::BTreeSet::new();
        for (i, tx) in txs.iter().enumerate() {
            let p = tx.payload();
            let mut ctx = TxContext::new(&oracle);
            let env = ExecEnv {
                params: net.ledger.params(),
                regulator: None,
                anchors: &net.ledger,
                payload_digest: p.digest(),
            };
            execute(p, &mut ctx, &env).unwrap();
            let rw = ctx.into_rwset();
            if out.flags[i] {
                assert_eq!(
                    rw, tx.rwset,
                    "round {round} tx {i}: sequential re-execution differs"
                );
                let v = Version::new(h, i as u32);
                oracle.apply(&rw.writes, v);
                oracle.apply(
                    &[(nonce_key(&p.proposer), Some(codec::encode(&p.nonce)))],
                    v,
                );
                written.extend(rw.writes.iter().map(|(k, _)| k.clone()));
            } else {
                assert!(
                    tx.rwset.reads.iter().any(|(k, _)| written.contains(k)),
                    "round {round} tx {i}: spurious conflict"
                );
            }
        }
        oracle.set_height(h);
        assert_eq!(
            oracle.state_hash(),
            net.ledger.state_hash(),
            "round {round}"
        );
    }
}

#[test]
fn endorsers_agree_on_rwsets() {
    let mut net = Devnet::new(10, 4, small_batch());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let (mode, blocked) = random_mode(&mut rng);
        queue_pref(&mut net, rng.gen_range(0..50), mode, &blocked);
        let tx = net.take_pending().pop().unwrap();
        let d = tx.rwset.digest();
        assert!(tx.endorsements.len() >= 2);
        assert!(tx.endorsements.iter().all(|e| e.rwset_digest == d));
    }
}

fn grown_chain(seed: u64, blocks: u64) -> Devnet {
    let mut net = Devnet::new(seed, 3, small_batch());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in 0..blocks {
        net.tick = b;
        for _ in 0..rng.gen_range(1..4) {
            let (mode, blocked) = random_mode(&mut rng);
            queue_pref(&mut net, rng.gen_range(0..30), mode, &blocked);
        }
        net.cut();
    }
    net
}

#[test]
fn chain_verifies_and_localises_tampering() {
    let net = grown_chain(12, 100);
    let blocks = net.ledger.blocks().to_vec();
    assert_eq!(blocks.len(), 101);
    assert_eq!(verify_chain(&blocks), Ok(()));
    assert_eq!(verify_chain(&blocks[..1]), Ok(()));

    let mut bad = blocks.clone();
    bad[42].timestamp += 1;
    assert_eq!(verify_chain(&bad), Err(42));

    let mut bad = blocks.clone();
    bad[60].txs[0].rwset.writes[0].1 = Some(vec![0xff]);
    assert_eq!(verify_chain(&bad), Err(60));

    let mut bad = blocks;
    let last = bad.len() - 1;
    bad[last].validity_flags.iter_mut().for_each(|f| *f = !*f);
    assert_eq!(verify_chain(&bad), Err(last as u64));
}

#[test]
fn dump_round_trip() {
    let net = grown_chain(13, 25);
    let bytes = encode_dump(net.ledger.blocks());
    assert_eq!(decode_dump(&bytes).unwrap(), net.ledger.blocks());
    assert_eq!(verify_dump(&bytes).unwrap(), ChainCheck::Ok { blocks: 26 });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.bin");
    ucc_core::ledger::dump::write_atomic(&path, &bytes).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn joining_node_reaches_the_same_state() {
    let net = grown_chain(14, 80);
    let blocks = net.ledger.blocks();
    for h in [0usize, 1, 37, 80] {
        let late = Ledger::replay(&blocks[..=h]).unwrap();
        assert_eq!(
            Some(late.state_hash()),
            net.ledger.state_hash_at(h as u64),
            "height {h}"
        );
    }
    let full = Ledger::replay(blocks).unwrap();
    assert_eq!(full.state_hash(), net.ledger.state_hash());
}
