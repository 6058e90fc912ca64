//! Principal entities, sender headers, lookalike rejection and delegation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::contract::{ExecEnv, Rejection};
use crate::ledger::rwset::TxContext;
use crate::ledger::tx::TransactionPayload;
use crate::membership::{load_member, Role};

pub const HEADER_INDEX_KEY: &[u8] = b"idx/hdr";

pub fn pe_key(pe_id: &str) -> Vec<u8> {
    format!("pe/{pe_id}").into_bytes()
}

pub fn header_key(header: &str) -> Vec<u8> {
    format!("hdr/{header}").into_bytes()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrincipalEntity {
    pub pe_id: String,
    pub name: String,
    pub documents_ref: String,
    /// Identity acting for the entity on chain.
    pub proxy: String,
    pub registered_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeaderRecord {
    pub header: String,
    pub owner_pe: String,
    pub delegated_tms: BTreeSet<String>,
    pub registered_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterPeArgs {
    pub pe_id: String,
    pub name: String,
    pub documents_ref: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterHeaderArgs {
    pub pe_id: String,
    pub header: String,
    /// Outcome of the operators' manual document check.
    pub approved: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegateArgs {
    pub header: String,
    pub tm_id: String,
}

pub fn is_valid_header(header: &str) -> bool {
    header.len() == 6
        && header
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
}

/// Case-fold and collapse visually confusable characters.
pub fn confusable_normalize(header: &str) -> String {
    header
        .chars()
        .map(|c| match c.to_ascii_uppercase() {
            '0' => 'O',
            '1' | 'L' => 'I',
            '5' => 'S',
            '8' => 'B',
            other => other,
        })
        .collect()
}

pub fn lookalike_distance(a: &str, b: &str) -> usize {
    strsim::levenshtein(&confusable_normalize(a), &confusable_normalize(b))
}

pub fn is_lookalike(a: &str, b: &str, threshold: u32) -> bool {
    lookalike_distance(a, b) <= threshold as usize
}

/// Strip an operator display prefix such as `"VM-"` from a delivered sender.
pub fn strip_display_prefix(sender: &str) -> &str {
    match sender.split_once('-') {
        Some((p, rest)) if p.len() == 2 && p.bytes().all(|b| b.is_ascii_uppercase()) => rest,
        _ => sender,
    }
}

pub(crate) fn load_header(ctx: &mut TxContext<'_>, header: &str) -> Option<HeaderRecord> {
    ctx.get_as(&header_key(header))
}

pub(crate) fn is_delegated(ctx: &mut TxContext<'_>, header: &str, tm_id: &str) -> bool {
    load_header(ctx, header).is_some_and(|h| h.delegated_tms.contains(tm_id))
}

pub(crate) fn execute_register_pe(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
) -> Result<(), Rejection> {
    let args: RegisterPeArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    if args.pe_id.is_empty() {
        return Err(Rejection::BadArgs);
    }
    if ctx.exists(&pe_key(&args.pe_id)) {
        return Err(Rejection::DuplicatePrincipalEntity);
    }
    let pe = PrincipalEntity {
        pe_id: args.pe_id.clone(),
        name: args.name,
        documents_ref: args.documents_ref,
        proxy: payload.proposer.clone(),
        registered_tick: payload.timestamp,
    };
    ctx.put_as(&pe_key(&args.pe_id), &pe);
    Ok(())
}

pub(crate) fn execute_register_header(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    env: &ExecEnv<'_>,
) -> Result<(), Rejection> {
    let args: RegisterHeaderArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let pe: PrincipalEntity = ctx
        .get_as(&pe_key(&args.pe_id))
        .ok_or(Rejection::UnknownPrincipalEntity)?;
    if pe.proxy != payload.proposer {
        return Err(Rejection::NotOwner);
    }
    if !is_valid_header(&args.header) {
        return Err(Rejection::BadFormat);
    }
    if !args.approved {
        return Err(Rejection::NotApproved);
    }
    if ctx.exists(&header_key(&args.header)) {
        return Err(Rejection::DuplicateHeader);
    }
    let mut index: Vec<String> = ctx.get_as(HEADER_INDEX_KEY).unwrap_or_default();
    if let Some(existing) = index
        .iter()
        .find(|h| is_lookalike(h, &args.header, env.params.lookalike_threshold))
    {
        return Err(Rejection::LookalikeHeader(existing.clone()));
    }
    let pos = index.binary_search(&args.header).unwrap_err();
    index.insert(pos, args.header.clone());
    ctx.put_as(HEADER_INDEX_KEY, &index);
    let record = HeaderRecord {
        header: args.header.clone(),
        owner_pe: args.pe_id,
        delegated_tms: BTreeSet::new(),
        registered_tick: payload.timestamp,
    };
    ctx.put_as(&header_key(&args.header), &record);
    Ok(())
}

pub(crate) fn execute_delegate(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
) -> Result<(), Rejection> {
    let args: DelegateArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    let mut record = load_header(ctx, &args.header).ok_or(Rejection::UnknownHeader)?;
    let pe: PrincipalEntity = ctx
        .get_as(&pe_key(&record.owner_pe))
        .ok_or(Rejection::UnknownPrincipalEntity)?;
    if pe.proxy != payload.proposer {
        return Err(Rejection::NotOwner);
    }
    match load_member(ctx, &args.tm_id) {
        Some(m) if m.role == Role::Telemarketer => {}
        _ => return Err(Rejection::UnknownTelemarketer),
    }
    record.delegated_tms.insert(args.tm_id);
    ctx.put_as(&header_key(&args.header), &record);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain recursive edit distance, used as an oracle for the library
    /// implementation on short strings.
    fn edit_distance_oracle(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                if x == y {
                    edit_distance_oracle(ra, rb)
                } else {
                    1 + edit_distance_oracle(ra, b)
                        .min(edit_distance_oracle(a, rb))
                        .min(edit_distance_oracle(ra, rb))
                }
            }
        }
    }

    #[test]
    fn spoofing_pair_collides() {
        assert_eq!(lookalike_distance("STABAN", "SBIBAN"), 2);
        assert!(is_lookalike("STABAN", "SBIBAN", 2));
        assert!(is_lookalike("HDFCBK", "HDFC8K", 2));
        assert!(!is_lookalike("STABAN", "KOTAKB", 2));
    }

    #[test]
    fn header_format() {
        assert!(is_valid_header("STABAN"));
        assert!(is_valid_header("AB12CD"));
        assert!(!is_valid_header("ST@BAN"));
        assert!(!is_valid_header("staban"));
        assert!(!is_valid_header("STABANK"));
    }

    #[test]
    fn display_prefix_stripping() {
        assert_eq!(strip_display_prefix("VM-STABAN"), "STABAN");
        assert_eq!(strip_display_prefix("STABAN"), "STABAN");
        assert_eq!(strip_display_prefix("AB-CD"), "CD");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn distance_matches_oracle(a in "[A-Z0-9]{0,6}", b in "[A-Z0-9]{0,6}") {
            let na: Vec<char> = confusable_normalize(&a).chars().collect();
            let nb: Vec<char> = confusable_normalize(&b).chars().collect();
            prop_assert_eq!(lookalike_distance(&a, &b), edit_distance_oracle(&na, &nb));
        }
    }
}
