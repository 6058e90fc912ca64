#![allow(dead_code)]

use std::collections::BTreeSet;

use ucc_core::crypto::{self, SealedFile};
use ucc_core::params::ConsortiumParams;
use ucc_core::registries::{Category, TemplateKind};
use ucc_core::scrubbing::{parse_file, MirrorIndex, ScrubRequest, ScrubResultArgs, Scrubber};
use ucc_core::sim::devnet::{operator_prefix, Devnet};
use ucc_core::{Digest, TxType};

pub const HEADER: &str = "STABAN";
pub const PROMO: &str = "Dear <%..%>, your <%..%> offer is waiting. T&C apply";
pub const CONSENT: &str =
    "Thank you for banking with <%..%>. You may receive up to 4 sms/month with offers. Your consent OTP: <%..%>";
pub const TM: &str = "tm-1";

pub fn small_batch() -> ConsortiumParams {
    ConsortiumParams {
        min_batch_size: 1,
        ..ConsortiumParams::default()
    }
}

/// Devnet with `ops` operators and one telemarketer on STABAN holding a
/// promotional and a consent template.
pub fn bank_net(seed: u64, ops: usize, params: ConsortiumParams) -> (Devnet, Digest, Digest) {
    let mut net = Devnet::new(seed, ops, params);
    let ids = net
        .add_telemarketer(
            TM,
            &[HEADER],
            &[
                (HEADER, PROMO, TemplateKind::Promotional),
                (HEADER, CONSENT, TemplateKind::Consent),
            ],
        )
        .expect("setup commits");
    (net, ids[0], ids[1])
}

/// Twelve-digit number on operator `op`'s prefix.
pub fn number(op: usize, i: u64) -> String {
    format!("{}{i:08}", operator_prefix(op))
}

pub fn request(numbers: &[String], template: Digest, category: &str, tick: u64) -> ScrubRequest {
    ScrubRequest {
        tm_id: TM.into(),
        header: HEADER.into(),
        template_id: template,
        category: Category::parse(category).unwrap(),
        numbers: numbers.to_vec(),
        requested_at: tick,
    }
}

/// Decrypt every per-operator file of a scrub with the operators' keys.
pub fn valid_numbers(
    net: &Devnet,
    scrubber: &Scrubber,
    args: &ScrubResultArgs,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for f in &args.token.per_operator {
        let kp = net.key_of(&f.recipient).expect("operator key");
        let sealed = SealedFile::from_bytes(scrubber.store.get(&f.locator).unwrap()).unwrap();
        let plain = crypto::open(kp, &sealed).unwrap();
        assert_eq!(Digest::of(&plain), f.digest);
        out.extend(parse_file(&plain));
    }
    out
}

pub fn mirror_at(net: &Devnet, height: u64) -> MirrorIndex {
    MirrorIndex::from_state(&net.ledger.state().at(height))
}

pub fn commit_scrub(net: &mut Devnet, args: &ScrubResultArgs) {
    net.commit(ucc_core::sim::devnet::SCRUBBER, TxType::ScrubResult, args)
        .expect("scrub result commits");
}
