//! Subscriber preference registry: category blocks keyed by hashed number.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::contract::{proposer_role, Rejection};
use crate::crypto::Digest;
use crate::ledger::rwset::TxContext;
use crate::ledger::tx::TransactionPayload;
use crate::membership::{load_member, Role};

/// Promotional categories with their stable codes.
pub const CATEGORIES: [(u8, &str); 7] = [
    (1, "Banking"),
    (2, "RealEstate"),
    (3, "Education"),
    (4, "Health"),
    (5, "ConsumerGoods"),
    (6, "Communication"),
    (7, "Tourism"),
];

/// A top-level category name optionally followed by `/`-separated
/// sub-category segments, e.g. `Health/Pharmacy`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Category(String);

impl Category {
    /// Accepts a name (`Health`), a code (`4`) or either followed by
    /// sub-category segments of ASCII letters and digits.
    pub fn parse(s: &str) -> Result<Self, Rejection> {
        let mut parts = s.split('/');
        let root = parts.next().unwrap_or_default();
        let name = CATEGORIES
            .iter()
            .find(|(code, name)| root == *name || root == code.to_string())
            .map(|(_, name)| *name)
            .ok_or(Rejection::UnknownCategory)?;
        let mut out = name.to_string();
        for seg in parts {
            if seg.is_empty() || !seg.bytes().all(|b| b.is_ascii_alphanumeric()) {
                return Err(Rejection::UnknownCategory);
            }
            out.push('/');
            out.push_str(seg);
        }
        Ok(Category(out))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn code(&self) -> u8 {
        let root = self.0.split('/').next().unwrap_or_default();
        CATEGORIES
            .iter()
            .find(|(_, n)| *n == root)
            .map(|(c, _)| *c)
            .unwrap_or(0)
    }

    /// A block on `self` covers `other` when `other` is `self` or one of its
    /// descendants.
    pub fn covers(&self, other: &Category) -> bool {
        other.0 == self.0
            || (other.0.starts_with(&self.0) && other.0.as_bytes().get(self.0.len()) == Some(&b'/'))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceMode {
    FullyOpen,
    FullyBlocked,
    Partial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub key: Digest,
    pub operator: String,
    pub mode: PreferenceMode,
    pub blocked: BTreeSet<Category>,
    /// With `FullyBlocked`, also suppress headers the subscriber consented to.
    pub block_consented: bool,
    pub updated_tick: u64,
}

impl PreferenceRecord {
    /// Category-level decision, ignoring consent.
    pub fn allows(&self, category: &Category) -> bool {
        self.mode != PreferenceMode::FullyBlocked
            && !self.blocked.iter().any(|b| b.covers(category))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdatePreferenceArgs {
    pub key: Digest,
    pub operator: String,
    pub mode: PreferenceMode,
    pub blocked: Vec<String>,
    pub block_consented: bool,
}

pub fn preference_key(key: &Digest) -> Vec<u8> {
    format!("pref/{}", key.to_hex()).into_bytes()
}

pub(crate) fn execute_update(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
) -> Result<(), Rejection> {
    let args: UpdatePreferenceArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let blocked = args
        .blocked
        .iter()
        .map(|c| Category::parse(c))
        .collect::<Result<BTreeSet<_>, _>>()?;
    match load_member(ctx, &args.operator) {
        Some(m) if m.role == Role::Operator => {}
        _ => return Err(Rejection::UnknownOperator),
    }
    let existing: Option<PreferenceRecord> = ctx.get_as(&preference_key(&args.key));
    if proposer_role(ctx, payload) == Some(Role::Operator) {
        let owner = existing
            .as_ref()
            .map(|r| r.operator.as_str())
            .unwrap_or(&args.operator);
        if owner != payload.proposer || args.operator != payload.proposer {
            return Err(Rejection::WrongOperator);
        }
    }
    let record = PreferenceRecord {
        key: args.key,
        operator: args.operator,
        mode: args.mode,
        blocked,
        block_consented: args.block_consented,
        updated_tick: payload.timestamp,
    };
    ctx.put_as(&preference_key(&args.key), &record);
    Ok(())
}
