use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::tx::{Endorsement, TxType};
use crate::crypto::Digest;
use crate::membership::{Role, Roster};

/// Boolean rule over the set of endorsing identities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyRule {
    /// More than half of all active participants.
    Majority,
    /// Every active participant holding the role.
    AllOf(Role),
    AtLeast(u32, Role),
    Identity(String),
    And(Vec<PolicyRule>),
    Or(Vec<PolicyRule>),
}

impl PolicyRule {
    pub fn evaluate(&self, endorsers: &BTreeSet<String>, roster: &Roster) -> bool {
        let active = |id: &String| roster.get(id).is_some();
        match self {
            PolicyRule::Majority => {
                let n = endorsers.iter().filter(|id| active(id)).count();
                2 * n > roster.len()
            }
            PolicyRule::AllOf(role) => roster.ids_with_role(*role).all(|id| endorsers.contains(id)),
            PolicyRule::AtLeast(k, role) => {
                let n = endorsers
                    .iter()
                    .filter(|id| roster.role_of(id) == Some(*role))
                    .count();
                n >= *k as usize
            }
            PolicyRule::Identity(id) => endorsers.contains(id) && active(id),
            PolicyRule::And(rules) => rules.iter().all(|r| r.evaluate(endorsers, roster)),
            PolicyRule::Or(rules) => rules.iter().any(|r| r.evaluate(endorsers, roster)),
        }
    }

    /// Whether `id` with `role` appears in some leaf of the rule, i.e. its
    /// endorsement can contribute.
    pub fn admits(&self, id: &str, role: Role) -> bool {
        match self {
            PolicyRule::Majority => true,
            PolicyRule::AllOf(r) | PolicyRule::AtLeast(_, r) => *r == role,
            PolicyRule::Identity(i) => i == id,
            PolicyRule::And(rules) | PolicyRule::Or(rules) => {
                rules.iter().any(|r| r.admits(id, role))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndorsementPolicy {
    pub tx_type: TxType,
    pub rule: PolicyRule,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("endorsements carry differing read-write set digests")]
    MismatchedReadWriteSets,
}

/// Accept iff the distinct endorsers satisfy the rule. Signatures are assumed
/// to have been checked by the caller.
pub fn evaluate_policy(
    policy: &EndorsementPolicy,
    endorsements: &[Endorsement],
    roster: &Roster,
) -> Result<bool, PolicyError> {
    let digests: BTreeSet<Digest> = endorsements.iter().map(|e| e.rwset_digest).collect();
    if digests.len() > 1 {
        return Err(PolicyError::MismatchedReadWriteSets);
    }
    let endorsers: BTreeSet<String> = endorsements.iter().map(|e| e.endorser.clone()).collect();
    Ok(policy.rule.evaluate(&endorsers, roster))
}

/// Per-kind rules, stored on chain at genesis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub default: PolicyRule,
    pub overrides: BTreeMap<TxType, PolicyRule>,
}

impl Default for PolicyTable {
    fn default() -> Self {
        let header_rule = PolicyRule::And(vec![
            PolicyRule::AllOf(Role::Telemarketer),
            PolicyRule::AtLeast(1, Role::Observer),
            PolicyRule::AtLeast(1, Role::Operator),
        ]);
        let mut overrides = BTreeMap::new();
        overrides.insert(TxType::RegisterPrincipalEntity, header_rule.clone());
        overrides.insert(TxType::RegisterHeader, header_rule);
        PolicyTable {
            default: PolicyRule::Majority,
            overrides,
        }
    }
}

impl PolicyTable {
    pub fn policy_for(&self, tx_type: TxType) -> EndorsementPolicy {
        let rule = self
            .overrides
            .get(&tx_type)
            .cloned()
            .unwrap_or_else(|| self.default.clone());
        EndorsementPolicy { tx_type, rule }
    }
}
