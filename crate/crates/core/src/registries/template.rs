//! Content templates: `<%..%>` placeholder grammar, matching of delivered
//! text against a template, and the consent-template clause checklist.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::header::is_delegated;
use crate::contract::Rejection;
use crate::crypto::Digest;
use crate::ledger::rwset::TxContext;
use crate::ledger::tx::TransactionPayload;

const OPEN: &str = "<%";
const CLOSE: &str = "%>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Promotional,
    Transactional,
    Consent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template_id: Digest,
    pub header: String,
    pub text: String,
    pub kind: TemplateKind,
    pub registered_tick: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterTemplateArgs {
    pub header: String,
    pub text: String,
    pub kind: TemplateKind,
}

pub fn template_key(id: &Digest) -> Vec<u8> {
    format!("tpl/{}", id.to_hex()).into_bytes()
}

pub fn template_id(header: &str, text: &str) -> Digest {
    Digest::of_parts(&[b"ucc-template", header.as_bytes(), text.as_bytes()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("malformed placeholder slots")]
pub struct MalformedPlaceholders;

/// Literal segments around the slots; `n` slots yield `n + 1` literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTemplate {
    pub literals: Vec<String>,
}

impl ParsedTemplate {
    pub fn slots(&self) -> usize {
        self.literals.len() - 1
    }

    pub fn literal_len(&self) -> usize {
        self.literals.iter().map(String::len).sum()
    }
}

/// Split into literals and slots. Slots are balanced `<%`..`%>` pairs and do
/// not nest.
pub fn parse_template(text: &str) -> Result<ParsedTemplate, MalformedPlaceholders> {
    let mut literals = Vec::new();
    let mut rest = text;
    loop {
        let open = rest.find(OPEN);
        let close = rest.find(CLOSE);
        match (open, close) {
            (None, None) => {
                literals.push(rest.to_string());
                return Ok(ParsedTemplate { literals });
            }
            (Some(o), Some(c)) if o < c => {
                let inner = &rest[o + OPEN.len()..c];
                if inner.contains(OPEN) {
                    return Err(MalformedPlaceholders);
                }
                literals.push(rest[..o].to_string());
                rest = &rest[c + CLOSE.len()..];
            }
            _ => return Err(MalformedPlaceholders),
        }
    }
}

/// True iff `message` is the template text with every slot replaced by a
/// non-empty string that contains no `"<%"`.
pub fn match_template(template_text: &str, message: &str) -> bool {
    match parse_template(template_text) {
        Ok(t) => match_parsed(&t, message),
        Err(_) => false,
    }
}

pub fn match_parsed(t: &ParsedTemplate, message: &str) -> bool {
    let mut failed = HashSet::new();
    match_from(t, message, 0, 0, &mut failed)
}

// Literal `i` must start at byte `pos`.
fn match_from(
    t: &ParsedTemplate,
    msg: &str,
    i: usize,
    pos: usize,
    failed: &mut HashSet<(usize, usize)>,
) -> bool {
    let lit = &t.literals[i];
    let rest = &msg[pos..];
    if i == t.slots() {
        return rest == lit;
    }
    if !rest.starts_with(lit.as_str()) || failed.contains(&(i, pos)) {
        return false;
    }
    let start = pos + lit.len();
    for (off, ch) in msg[start..].char_indices() {
        let end = start + off + ch.len_utf8();
        if msg[start..end].ends_with(OPEN) {
            break;
        }
        if match_from(t, msg, i + 1, end, failed) {
            return true;
        }
    }
    failed.insert((i, pos));
    false
}

fn frequency_clause() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\bup to \d+ (sms|messages?)\s*(/|per|a)\s*(day|week|month)\b")
            .expect("static regex")
    })
}

fn otp_or_link_slot() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)(\botp\b[^<]{0,16}<%[^%]*%>)|(<%\s*link\s*%>)").expect("static regex")
    })
}

/// Required clauses of a consent template.
pub fn check_consent_clauses(text: &str) -> Result<(), Rejection> {
    if !frequency_clause().is_match(text) {
        return Err(Rejection::ConsentClauseMissing("message frequency"));
    }
    if !otp_or_link_slot().is_match(text) {
        return Err(Rejection::ConsentClauseMissing("otp or link slot"));
    }
    Ok(())
}

pub(crate) fn execute_register(
    payload: &TransactionPayload,
    ctx: &mut TxContext<'_>,
    consent: bool,
) -> Result<(), Rejection> {
    let args: RegisterTemplateArgs = payload.decode_args().map_err(|_| Rejection::BadArgs)?;
    if (args.kind == TemplateKind::Consent) != consent {
        return Err(Rejection::BadArgs);
    }
    if !is_delegated(ctx, &args.header, &payload.proposer) {
        return Err(Rejection::NotDelegated);
    }
    parse_template(&args.text).map_err(|_| Rejection::MalformedPlaceholders)?;
    if consent {
        check_consent_clauses(&args.text)?;
    }
    let id = template_id(&args.header, &args.text);
    let key = template_key(&id);
    if ctx.exists(&key) {
        return Ok(());
    }
    let record = TemplateRecord {
        template_id: id,
        header: args.header,
        text: args.text,
        kind: args.kind,
        registered_tick: payload.timestamp,
    };
    ctx.put_as(&key, &record);
    Ok(())
}
