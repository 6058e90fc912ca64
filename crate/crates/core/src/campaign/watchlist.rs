//! UTM watch list: complaint counts per line and degraded-service actions.

use serde::{Deserialize, Serialize};

use super::complaint::line_complaint_prefix;
use crate::contract::{ExecEnv, Rejection};
use crate::crypto::Digest;
use crate::ledger::rwset::TxContext;
use crate::ledger::state::StateRead;
use crate::ledger::tx::TransactionPayload;
use crate::registries::read_as;

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum WatchAction {
    #[default]
    None,
    Throttled,
    Degraded,
    Terminated,
}

impl WatchAction {
    pub fn label(self) -> &'static str {
        match self {
            WatchAction::None => "none",
            WatchAction::Throttled => "throttled",
            WatchAction::Degraded => "degraded",
            WatchAction::Terminated => "terminated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatchListEntry {
    pub key: Digest,
    pub complaint_count: u64,
    pub last_height: u64,
    pub action: WatchAction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegradedServiceArgs {
    pub line: Digest,
    pub action: WatchAction,
}

pub fn watch_key(line: &Digest) -> Vec<u8> {
    format!("watch/{}", line.to_hex()).into_bytes()
}

/// Highest action whose threshold `count` has reached.
pub fn action_for(count: u64, thresholds: [u64; 3]) -> WatchAction {
    if count >= thresholds[2] {
        WatchAction::Terminated
    } else if count >= thresholds[1] {
        WatchAction::Degraded
    } else if count >= thresholds[0] {
        WatchAction::Throttled
    } else {
        WatchAction::None
    }
}

pub fn complaint_count(state: &dyn StateRead, line: &Digest) -> u64 {
    state.scan_prefix(&line_complaint_prefix(line)).len() as u64
}

pub fn current_action(state: &dyn StateRead, line: &Digest) -> WatchAction {
    read_as::<WatchListEntry>(state, &watch_key(line))
        .map(|e| e.action)
        .unwrap_or_default()
}

/// DegradedService arguments to propose after a UTM complaint, if the line
/// crossed a threshold above its current action.
pub fn update_watchlist(
    state: &dyn StateRead,
    line: &Digest,
    thresholds: [u64; 3],
) -> Option<DegradedServiceArgs> {
    let due = action_for(complaint_count(state, line), thresholds);
    (due > current_action(state, line)).then_some(DegradedServiceArgs {
        line: *line,
        action: due,
    })
}

pub(crate) fn execute_degraded(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    env: &ExecEnv<'_>,
) -> Result<(), Rejection> {
    let args: DegradedServiceArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let count = ctx.scan_prefix(&line_complaint_prefix(&args.line)).len() as u64;
    let key = watch_key(&args.line);
    let current = ctx
        .get_as::<WatchListEntry>(&key)
        .map(|e| e.action)
        .unwrap_or_default();
    if current == WatchAction::Terminated || args.action <= current {
        return Err(Rejection::NotEscalation);
    }
    if args.action > action_for(count, env.params.watch_thresholds) {
        return Err(Rejection::BelowThreshold);
    }
    let entry = WatchListEntry {
        key: args.line,
        complaint_count: count,
        last_height: ctx.height() + 1,
        action: args.action,
    };
    ctx.put_as(&key, &entry);
    Ok(())
}
