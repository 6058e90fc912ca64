//! Fixtures shared by the benchmarks.

use ucc_core::registries::{Category, PreferenceMode, TemplateKind};
use ucc_core::scrubbing::ScrubRequest;
use ucc_core::sim::devnet::{operator_id, operator_prefix, Devnet};
use ucc_core::{ConsortiumParams, Digest, TxType};

pub const HEADER: &str = "STABAN";
pub const TM: &str = "tm-1";
const PROMO: &str = "Dear <%..%>, your <%..%> offer is waiting. T&C apply";

pub fn number(op: usize, i: u64) -> String {
    format!("{}{i:08}", operator_prefix(op))
}

/// Devnet with `ops` operators, one bank telemarketer, and every `stride`-th
/// subscriber of `subscribers` fully blocked. Returns the promotional template.
pub fn populated(ops: usize, subscribers: u64, stride: u64) -> (Devnet, Digest) {
    let mut net = Devnet::new(7, ops, ConsortiumParams::default());
    let ids = net
        .add_telemarketer(TM, &[HEADER], &[(HEADER, PROMO, TemplateKind::Promotional)])
        .expect("setup commits");
    for (n, i) in (0..subscribers).step_by(stride as usize).enumerate() {
        let op = (i as usize) % ops;
        let id = operator_id(op);
        let args = net.preference_args(&id, &number(op, i), PreferenceMode::FullyBlocked, &[]);
        net.submit(&id, TxType::UpdatePreference, &args)
            .expect("preference endorsed");
        if n % 200 == 199 {
            net.cut();
        }
    }
    net.cut();
    (net, ids[0])
}

pub fn request(numbers: Vec<String>, template: Digest) -> ScrubRequest {
    ScrubRequest {
        tm_id: TM.into(),
        header: HEADER.into(),
        template_id: template,
        category: Category::parse("Banking").expect("known category"),
        numbers,
        requested_at: 0,
    }
}

pub fn numbers(ops: usize, count: u64) -> Vec<String> {
    (0..count).map(|i| number(i as usize % ops, i)).collect()
}
