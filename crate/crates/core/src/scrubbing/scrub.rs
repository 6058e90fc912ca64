//! Scrub execution: set difference of a telemarketer's list against the
//! mirrored preferences, per-operator sealed files and the on-chain token.

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::mirror::{is_deliverable, MirrorIndex};
use crate::crypto::{self, ConsortiumKey, Digest, KeyPair, PublicKey, Signature};
use crate::ledger::chain::Ledger;
use crate::ledger::state::StateRead;
use crate::membership::{Role, Roster};
use crate::registries::header::{header_key, HeaderRecord};
use crate::registries::read_as;
use crate::registries::template::{template_key, TemplateKind, TemplateRecord};
use crate::registries::{normalize_number, Category};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubRequest {
    pub tm_id: String,
    pub header: String,
    pub template_id: Digest,
    pub category: Category,
    /// Telemarketer-supplied list; never leaves the scrubber in plaintext.
    pub numbers: Vec<String>,
    pub requested_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScrubError {
    #[error("telemarketer not delegated for header")]
    NotDelegated,
    #[error("template not registered under header or wrong kind")]
    UnregisteredTemplate,
    #[error("batch of {got} numbers below minimum {min}")]
    BatchTooSmall { got: usize, min: u64 },
    #[error("index at {index} trails ledger tip {tip}")]
    StaleIndex { index: u64, tip: u64 },
    #[error("no key on record for {0}")]
    UnknownRecipient(String),
}

/// Number-prefix to operator table for numbers the registry does not map.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OperatorRouting {
    prefixes: Vec<(String, String)>,
    default: Option<String>,
}

impl OperatorRouting {
    pub fn new<I, P, O>(table: I, default: Option<String>) -> Self
    where
        I: IntoIterator<Item = (P, O)>,
        P: Into<String>,
        O: Into<String>,
    {
        let mut prefixes: Vec<(String, String)> = table
            .into_iter()
            .map(|(p, o)| (p.into(), o.into()))
            .collect();
        prefixes.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        OperatorRouting { prefixes, default }
    }

    /// Longest matching prefix of the normalized (12-digit) number.
    pub fn resolve(&self, normalized: &str) -> Option<&str> {
        self.prefixes
            .iter()
            .find(|(p, _)| normalized.starts_with(p.as_str()))
            .map(|(_, o)| o.as_str())
            .or(self.default.as_deref())
    }
}

/// Valid numbers by operator and everything else, all normalized where
/// possible.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Partition {
    pub by_operator: BTreeMap<String, Vec<String>>,
    pub invalid: Vec<String>,
}

impl Partition {
    pub fn valid_count(&self) -> usize {
        self.by_operator.values().map(Vec::len).sum()
    }
}

/// `V = {n in L : deliverable}` split by operator; `L - V` goes to
/// `invalid`. Malformed, duplicate and unroutable entries are invalid.
pub fn partition(
    numbers: &[String],
    header: &str,
    category: &Category,
    index: &MirrorIndex,
    key: &ConsortiumKey,
    routing: &OperatorRouting,
) -> Partition {
    let mut out = Partition::default();
    let mut seen = BTreeSet::new();
    for raw in numbers {
        let Ok(n) = normalize_number(raw) else {
            out.invalid.push(raw.clone());
            continue;
        };
        if !seen.insert(n.clone()) {
            out.invalid.push(n);
            continue;
        }
        let h = key.keyed_hash(n.as_bytes());
        if !is_deliverable(&h, header, category, index) {
            out.invalid.push(n);
            continue;
        }
        let operator = index
            .pref
            .get(&h)
            .map(|r| r.operator.as_str())
            .or_else(|| routing.resolve(&n));
        match operator {
            Some(op) => out.by_operator.entry(op.to_string()).or_default().push(n),
            None => out.invalid.push(n),
        }
    }
    for v in out.by_operator.values_mut() {
        v.sort();
    }
    out.invalid.sort();
    out
}

/// Newline-terminated, ascending lines.
pub fn file_bytes(lines: &[String]) -> Vec<u8> {
    let mut sorted: Vec<&String> = lines.iter().collect();
    sorted.sort();
    let mut out = Vec::with_capacity(lines.len() * 13);
    for l in sorted {
        out.extend_from_slice(l.as_bytes());
        out.push(b'\n');
    }
    out
}

pub fn parse_file(bytes: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(str::to_string)
        .collect()
}

/// Content-addressed blob store standing in for the scrubber's file share.
#[derive(Clone, Debug, Default)]
pub struct ObjectStore {
    objects: BTreeMap<String, Vec<u8>>,
}

impl ObjectStore {
    pub fn put(&mut self, bytes: Vec<u8>) -> String {
        let locator = format!("obj/{}", Digest::of(&bytes).to_hex());
        self.objects.insert(locator.clone(), bytes);
        locator
    }

    pub fn get(&self, locator: &str) -> Option<&[u8]> {
        self.objects.get(locator).map(Vec::as_slice)
    }

    pub fn get_mut(&mut self, locator: &str) -> Option<&mut Vec<u8>> {
        self.objects.get_mut(locator)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRef {
    /// Operator id, or the observer id for the invalid file.
    pub recipient: String,
    pub locator: String,
    /// Digest of the plaintext file bytes.
    pub digest: Digest,
    pub lines: u64,
    pub signature: Signature,
}

impl FileRef {
    pub fn message(token_id: &[u8; 16], recipient: &str, digest: &Digest, lines: u64) -> Vec<u8> {
        let mut m = b"ucc-scrub-file".to_vec();
        m.extend_from_slice(token_id);
        m.extend_from_slice(&(recipient.len() as u64).to_be_bytes());
        m.extend_from_slice(recipient.as_bytes());
        m.extend_from_slice(digest.as_bytes());
        m.extend_from_slice(&lines.to_be_bytes());
        m
    }

    pub fn verify(&self, token_id: &[u8; 16], scrubber: &PublicKey) -> bool {
        crypto::verify(
            scrubber,
            &Self::message(token_id, &self.recipient, &self.digest, self.lines),
            &self.signature,
        )
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubCounts {
    pub input: u64,
    pub valid: u64,
    pub invalid: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubToken {
    pub token_id: [u8; 16],
    pub state_hash: Digest,
    pub decision_height: u64,
    pub per_operator: Vec<FileRef>,
    /// Numbers removed from the list, readable by the observer only.
    pub invalid_file: Option<FileRef>,
    pub counts: ScrubCounts,
    pub scrubber_id: String,
}

impl ScrubToken {
    pub fn id_hex(&self) -> String {
        hex::encode(self.token_id)
    }
}

/// Arguments of the ScrubResult transaction; stored as-is under `scrub/<token>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrubResultArgs {
    pub token: ScrubToken,
    pub tm_id: String,
    pub header: String,
    pub template_id: Digest,
    pub category: Category,
}

/// A scrubbing node's private working set.
#[derive(Debug)]
pub struct Scrubber {
    pub id: String,
    key: KeyPair,
    consortium_key: ConsortiumKey,
    pub routing: OperatorRouting,
    pub store: ObjectStore,
    /// Requests served per telemarketer.
    pub fees: BTreeMap<String, u64>,
    rng: ChaCha20Rng,
}

impl Scrubber {
    pub fn new(
        id: &str,
        key: KeyPair,
        consortium_key: ConsortiumKey,
        routing: OperatorRouting,
        seed: u64,
    ) -> Self {
        Scrubber {
            id: id.to_string(),
            key,
            consortium_key,
            routing,
            store: ObjectStore::default(),
            fees: BTreeMap::new(),
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn public(&self) -> PublicKey {
        self.key.public()
    }

    /// Scrub `req` against `index` (pinned at its height) and build the
    /// ScrubResult arguments. Delegation and keys are read at the tip. Nothing in the result reveals a number.
    pub fn scrub(
        &mut self,
        req: &ScrubRequest,
        index: &MirrorIndex,
        ledger: &Ledger,
    ) -> Result<ScrubResultArgs, ScrubError> {
        let params = ledger.params();
        let decision_height = index.height.unwrap_or(0).min(ledger.height());
        let tip = ledger.state();
        check_request(req, tip)?;
        if (req.numbers.len() as u64) < params.min_batch_size {
            return Err(ScrubError::BatchTooSmall {
                got: req.numbers.len(),
                min: params.min_batch_size,
            });
        }
        if req.requested_at >= params.enforcement_tick
            && ledger.height() - decision_height > params.max_scrub_lag_blocks
        {
            return Err(ScrubError::StaleIndex {
                index: decision_height,
                tip: ledger.height(),
            });
        }
        let roster = Roster::from_state(tip);
        let part = partition(
            &req.numbers,
            &req.header,
            &req.category,
            index,
            &self.consortium_key,
            &self.routing,
        );
        let mut token_id = [0u8; 16];
        self.rng.fill_bytes(&mut token_id);

        let mut per_operator = Vec::new();
        for (op, lines) in &part.by_operator {
            let pk = recipient_key(&roster, op, Role::Operator)?;
            per_operator.push(self.seal_file(&token_id, op, &pk, lines)?);
        }
        let invalid_file = if part.invalid.is_empty() {
            None
        } else {
            let observer = roster.ids_with_role(Role::Observer).next().cloned();
            match observer {
                Some(obs) => {
                    let pk = recipient_key(&roster, &obs, Role::Observer)?;
                    Some(self.seal_file(&token_id, &obs, &pk, &part.invalid)?)
                }
                None => None,
            }
        };
        *self.fees.entry(req.tm_id.clone()).or_default() += 1;
        let valid = part.valid_count() as u64;
        let token = ScrubToken {
            token_id,
            state_hash: ledger
                .state_hash_at(decision_height)
                .expect("height within chain"),
            decision_height,
            per_operator,
            invalid_file,
            counts: ScrubCounts {
                input: req.numbers.len() as u64,
                valid,
                invalid: req.numbers.len() as u64 - valid,
            },
            scrubber_id: self.id.clone(),
        };
        Ok(ScrubResultArgs {
            token,
            tm_id: req.tm_id.clone(),
            header: req.header.clone(),
            template_id: req.template_id,
            category: req.category.clone(),
        })
    }

    fn seal_file(
        &mut self,
        token_id: &[u8; 16],
        recipient: &str,
        pk: &PublicKey,
        lines: &[String],
    ) -> Result<FileRef, ScrubError> {
        let plain = file_bytes(lines);
        let digest = Digest::of(&plain);
        let sealed = crypto::seal(pk, &plain, &mut self.rng)
            .map_err(|_| ScrubError::UnknownRecipient(recipient.into()))?;
        let locator = self.store.put(sealed.to_bytes());
        let signature = self.key.sign(&FileRef::message(
            token_id,
            recipient,
            &digest,
            lines.len() as u64,
        ));
        Ok(FileRef {
            recipient: recipient.to_string(),
            locator,
            digest,
            lines: lines.len() as u64,
            signature,
        })
    }
}

fn recipient_key(roster: &Roster, id: &str, role: Role) -> Result<PublicKey, ScrubError> {
    roster
        .get(id)
        .filter(|m| m.role == role)
        .map(|m| m.public_key)
        .ok_or_else(|| ScrubError::UnknownRecipient(id.to_string()))
}

fn check_request(req: &ScrubRequest, view: &dyn StateRead) -> Result<(), ScrubError> {
    let hdr: Option<HeaderRecord> = read_as(view, &header_key(&req.header));
    if !hdr.is_some_and(|h| h.delegated_tms.contains(&req.tm_id)) {
        return Err(ScrubError::NotDelegated);
    }
    let tpl: Option<TemplateRecord> = read_as(view, &template_key(&req.template_id));
    match tpl {
        Some(t) if t.header == req.header && t.kind != TemplateKind::Consent => Ok(()),
        _ => Err(ScrubError::UnregisteredTemplate),
    }
}
