//! A simulated participant: ledger replica, endorsing peer and client.

use std::collections::{BTreeMap, BTreeSet};

use tracing::debug;

use super::network::{Message, Network};
use crate::campaign::lifecycle::CampaignStatusArgs;
use crate::crypto::{Digest, KeyPair};
use crate::ledger::block::Block;
use crate::ledger::chain::{committed_nonce, CommitOutcome, InvalidReason, Ledger};
use crate::ledger::peer::{EndorseError, Endorser};
use crate::ledger::rwset::ReadWriteSet;
use crate::ledger::tx::{EndorsedTx, Endorsement, Proposal, TransactionPayload, TxType};
use crate::membership::{RegulatorDb, Role};
use crate::registries::Category;
use crate::scrubbing::scrub::ScrubResultArgs;

pub const ORDERER: &str = "orderer";

/// What a telemarketer is asked to send.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignPlan {
    pub header: String,
    pub template_id: Digest,
    pub template_text: String,
    pub category: Category,
    pub message: String,
    pub numbers: Vec<String>,
}

/// Follow-up attached to a proposal, acted on when it commits.
#[derive(Clone, Debug)]
pub enum Purpose {
    Plain,
    Setup,
    Scrub {
        request_id: u64,
        tm: String,
        args: Box<ScrubResultArgs>,
    },
    CampaignInit {
        request_id: u64,
    },
    Watch {
        line: Digest,
    },
    /// An operator's leg outcome; re-queued if the proposal is abandoned.
    LegReport {
        args: Box<CampaignStatusArgs>,
        attempt: u32,
    },
}

struct Inflight {
    tx_type: TxType,
    args: Vec<u8>,
    proposal: Proposal,
    responses: BTreeMap<String, (Endorsement, ReadWriteSet)>,
    refused: BTreeMap<String, EndorseError>,
    expected: usize,
    deadline: u64,
    retries: u32,
    purpose: Purpose,
}

/// One of the node's own transactions found in a committed block.
#[derive(Clone, Debug)]
pub struct OwnResult {
    pub purpose: Purpose,
    /// Absent when the proposal never reached a block.
    pub tx: Option<EndorsedTx>,
    pub valid: bool,
}

impl OwnResult {
    pub fn abandoned(purpose: Purpose) -> Self {
        OwnResult {
            purpose,
            tx: None,
            valid: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Committed {
    pub block: Block,
    pub outcome: CommitOutcome,
    pub own: Vec<OwnResult>,
}

pub struct Node {
    pub id: String,
    pub role: Role,
    pub key: KeyPair,
    pub ledger: Option<Ledger>,
    endorser: Endorser,
    regulator: RegulatorDb,
    buffer: BTreeMap<u64, Block>,
    /// Tick of the outstanding block fetch, if any.
    fetching: Option<u64>,
    fetch_from: String,
    next_nonce: u64,
    collecting: BTreeMap<Digest, Inflight>,
    awaiting: BTreeMap<Digest, Inflight>,
    timeout: u64,
    max_retries: u32,
    /// Proposals abandoned, with the last reason.
    pub failures: Vec<(TxType, String)>,
    /// Purposes of proposals that will never commit, for the owner to drain.
    pub abandoned: Vec<Purpose>,
}

impl Node {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: &str,
        role: Role,
        key: KeyPair,
        ledger: Option<Ledger>,
        regulator: RegulatorDb,
        fetch_from: &str,
        timeout: u64,
        max_retries: u32,
    ) -> Self {
        Node {
            id: id.to_string(),
            role,
            endorser: Endorser::new(id, role, key.clone()),
            key,
            ledger,
            regulator,
            buffer: BTreeMap::new(),
            fetching: None,
            fetch_from: fetch_from.to_string(),
            next_nonce: 1,
            collecting: BTreeMap::new(),
            awaiting: BTreeMap::new(),
            timeout,
            max_retries,
            failures: Vec::new(),
            abandoned: Vec::new(),
        }
    }

    pub fn height(&self) -> Option<u64> {
        self.ledger.as_ref().map(|l| l.height())
    }

    pub fn ledger(&self) -> &Ledger {
        self.ledger.as_ref().expect("node has synced")
    }

    pub fn is_busy(&self) -> bool {
        !self.collecting.is_empty() || !self.awaiting.is_empty()
    }

    pub fn request_sync(&mut self, net: &mut Network, now: u64) {
        if self.fetching.is_none_or(|t| now >= t + self.timeout.max(1)) {
            self.fetching = Some(now);
            let from = self.height().map_or(0, |h| h + 1);
            net.send(
                now,
                &self.id,
                &self.fetch_from,
                Message::FetchBlocks { from },
            );
        }
    }

    pub fn serve_fetch(&self, net: &mut Network, now: u64, to: &str, from: u64) {
        if let Some(l) = &self.ledger {
            let blocks = l
                .blocks()
                .get(from as usize..)
                .map(|b| b.to_vec())
                .unwrap_or_default();
            net.send(now, &self.id, to, Message::Blocks(blocks));
        }
    }

    pub fn endorse(&mut self, net: &mut Network, now: u64, to: &str, proposal: &Proposal) {
        let Some(ledger) = &self.ledger else { return };
        let digest = proposal.payload.digest();
        let msg = match self
            .endorser
            .endorse(ledger, Some(&self.regulator), proposal)
        {
            Ok((endorsement, rwset)) => Message::Endorsed {
                digest,
                endorsement,
                rwset,
            },
            Err(error) => Message::Refused { digest, error },
        };
        net.send(now, &self.id, to, msg);
    }

    /// Sign and circulate a proposal to every endorser the policy admits.
    pub fn propose(
        &mut self,
        net: &mut Network,
        now: u64,
        tx_type: TxType,
        args: Vec<u8>,
        purpose: Purpose,
    ) -> bool {
        self.propose_attempt(net, now, tx_type, args, purpose, 0)
    }

    fn propose_attempt(
        &mut self,
        net: &mut Network,
        now: u64,
        tx_type: TxType,
        args: Vec<u8>,
        purpose: Purpose,
        retries: u32,
    ) -> bool {
        let Some(ledger) = &self.ledger else {
            return false;
        };
        let nonce = self
            .next_nonce
            .max(committed_nonce(ledger.state(), &self.id) + 1);
        self.next_nonce = nonce + 1;
        let payload = TransactionPayload {
            tx_type,
            args: args.clone(),
            proposer: self.id.clone(),
            nonce,
            timestamp: now,
        };
        let proposal = Proposal::sign(payload, &self.key);
        let rule = &ledger.policies().policy_for(tx_type).rule;
        let endorsers: Vec<String> = ledger
            .roster()
            .members()
            .filter(|m| !m.revoked && rule.admits(&m.id, m.role))
            .map(|m| m.id.clone())
            .collect();
        if endorsers.is_empty() {
            self.failures.push((tx_type, "no endorsers".into()));
            self.abandoned.push(purpose);
            return false;
        }
        for e in &endorsers {
            net.send(now, &self.id, e, Message::Propose(proposal.clone()));
        }
        let digest = proposal.payload.digest();
        self.collecting.insert(
            digest,
            Inflight {
                tx_type,
                args,
                proposal,
                responses: BTreeMap::new(),
                refused: BTreeMap::new(),
                expected: endorsers.len(),
                deadline: now + self.timeout,
                retries,
                purpose,
            },
        );
        true
    }

    pub fn on_response(&mut self, net: &mut Network, now: u64, from: &str, msg: Message) {
        let digest = match &msg {
            Message::Endorsed { digest, .. } | Message::Refused { digest, .. } => *digest,
            _ => return,
        };
        let Some(inf) = self.collecting.get_mut(&digest) else {
            return;
        };
        match msg {
            Message::Endorsed {
                endorsement, rwset, ..
            } if endorsement.endorser == from => {
                inf.responses.insert(from.to_string(), (endorsement, rwset));
            }
            Message::Refused { error, .. } => {
                inf.refused.insert(from.to_string(), error);
            }
            _ => return,
        }
        self.try_finish(net, now, digest, false);
    }

    /// Submit once some consistent group of endorsements satisfies the
    /// policy; give up when that can no longer happen.
    fn try_finish(&mut self, net: &mut Network, now: u64, digest: Digest, timed_out: bool) {
        let ledger = self.ledger.as_ref().expect("proposer has a ledger");
        let roster = ledger.roster();
        let inf = &self.collecting[&digest];
        let rule = &ledger.policies().policy_for(inf.tx_type).rule;

        let mut groups: BTreeMap<Digest, Vec<&String>> = BTreeMap::new();
        for (id, (e, _)) in &inf.responses {
            groups.entry(e.rwset_digest).or_default().push(id);
        }
        let mut best: Option<Vec<String>> = None;
        for ids in groups.values() {
            let mut chosen = BTreeSet::new();
            for id in ids {
                chosen.insert((*id).clone());
                if rule.evaluate(&chosen, &roster) {
                    if best.as_ref().is_none_or(|b| chosen.len() < b.len()) {
                        best = Some(chosen.iter().cloned().collect());
                    }
                    break;
                }
            }
        }
        if let Some(ids) = best {
            let mut inf = self.collecting.remove(&digest).expect("present");
            let rwset = inf.responses[&ids[0]].1.clone();
            let endorsements = ids.iter().map(|id| inf.responses[id].0.clone()).collect();
            let tx = EndorsedTx {
                proposal: inf.proposal.clone(),
                rwset,
                endorsements,
            };
            net.send(now, &self.id, ORDERER, Message::Submit(tx));
            inf.responses.clear();
            self.awaiting.insert(digest, inf);
            return;
        }
        let answered = inf.responses.len() + inf.refused.len();
        if answered < inf.expected && !timed_out {
            return;
        }
        let inf = self.collecting.remove(&digest).expect("present");
        let transient = inf
            .refused
            .values()
            .any(|e| matches!(e, EndorseError::StaleNonce))
            || timed_out;
        let reason = inf
            .refused
            .values()
            .next()
            .map(|e| e.to_string())
            .unwrap_or_else(|| {
                if timed_out {
                    "endorsement timeout".into()
                } else {
                    "inconsistent read-write sets".into()
                }
            });
        self.retry_or_fail(net, now, inf, transient, reason);
    }

    fn retry_or_fail(
        &mut self,
        net: &mut Network,
        now: u64,
        inf: Inflight,
        transient: bool,
        reason: String,
    ) {
        if transient && inf.retries < self.max_retries {
            debug!(node = %self.id, tx = %inf.tx_type, %reason, "retrying proposal");
            self.propose_attempt(
                net,
                now,
                inf.tx_type,
                inf.args,
                inf.purpose,
                inf.retries + 1,
            );
        } else {
            debug!(node = %self.id, tx = %inf.tx_type, %reason, "proposal abandoned");
            self.failures.push((inf.tx_type, reason));
            self.abandoned.push(inf.purpose);
        }
    }

    pub fn check_deadlines(&mut self, net: &mut Network, now: u64) {
        let due: Vec<Digest> = self
            .collecting
            .iter()
            .filter(|(_, i)| i.deadline <= now)
            .map(|(d, _)| *d)
            .collect();
        for d in due {
            self.try_finish(net, now, d, true);
        }
    }

    /// Buffer incoming blocks and commit every consecutive one. A gap
    /// triggers a fetch from the node's sync peer.
    pub fn receive_blocks(
        &mut self,
        net: &mut Network,
        now: u64,
        blocks: Vec<Block>,
        from_fetch: bool,
    ) -> Vec<Committed> {
        if from_fetch {
            self.fetching = None;
        }
        let mut out = Vec::new();
        for b in blocks {
            if self.height().is_none_or(|h| b.height > h) {
                self.buffer.insert(b.height, b);
            }
        }
        if self.ledger.is_none() {
            let Some(g) = self.buffer.remove(&0) else {
                self.request_sync(net, now);
                return out;
            };
            match Ledger::from_genesis(g) {
                Ok(l) => self.ledger = Some(l),
                Err(e) => {
                    debug!(node = %self.id, error = %e, "bad genesis from peer");
                    return out;
                }
            }
        }
        loop {
            let next = self.ledger().height() + 1;
            let Some(block) = self.buffer.remove(&next) else {
                break;
            };
            let ledger = self.ledger.as_mut().expect("synced");
            let outcome = match ledger.commit(block) {
                Ok(o) => o,
                Err(e) => {
                    debug!(node = %self.id, error = %e, "block rejected");
                    break;
                }
            };
            let block = ledger.block(next).expect("just committed").clone();
            let own = self.collect_own(net, now, &block, &outcome);
            out.push(Committed {
                block,
                outcome,
                own,
            });
        }
        if !self.buffer.is_empty() {
            self.request_sync(net, now);
        }
        out
    }

    fn collect_own(
        &mut self,
        net: &mut Network,
        now: u64,
        block: &Block,
        outcome: &CommitOutcome,
    ) -> Vec<OwnResult> {
        let mut own = Vec::new();
        for (i, tx) in block.txs.iter().enumerate() {
            if tx.payload().proposer != self.id {
                continue;
            }
            let Some(inf) = self.awaiting.remove(&tx.tx_id()) else {
                continue;
            };
            if outcome.flags.get(i).copied().unwrap_or(false) {
                own.push(OwnResult {
                    purpose: inf.purpose,
                    tx: Some(tx.clone()),
                    valid: true,
                });
                continue;
            }
            let reason = outcome
                .invalid
                .iter()
                .find(|(j, _)| *j == i)
                .map(|(_, r)| *r);
            let transient = matches!(
                reason,
                Some(InvalidReason::MvccConflict | InvalidReason::StaleNonce)
            );
            if transient && inf.retries < self.max_retries {
                self.retry_or_fail(net, now, inf, true, format!("{reason:?}"));
            } else {
                self.failures.push((inf.tx_type, format!("{reason:?}")));
                own.push(OwnResult {
                    purpose: inf.purpose,
                    tx: Some(tx.clone()),
                    valid: false,
                });
            }
        }
        own
    }
}
