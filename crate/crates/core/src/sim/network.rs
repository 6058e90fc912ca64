//! In-process message network with scripted delay and drop faults.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::config::{FaultConfig, FaultKind};
use super::node::CampaignPlan;
use crate::crypto::Digest;
use crate::ledger::block::Block;
use crate::ledger::peer::EndorseError;
use crate::ledger::rwset::ReadWriteSet;
use crate::ledger::tx::{EndorsedTx, Endorsement, Proposal};
use crate::registries::PreferenceMode;
use crate::scrubbing::scrub::{ScrubRequest, ScrubResultArgs, ScrubToken};

/// Messages exchanged between nodes. All are immutable values.
#[derive(Clone, Debug)]
pub enum Message {
    Propose(Proposal),
    Endorsed {
        digest: Digest,
        endorsement: Endorsement,
        rwset: ReadWriteSet,
    },
    Refused {
        digest: Digest,
        error: EndorseError,
    },
    Submit(EndorsedTx),
    Block(Block),
    FetchBlocks {
        from: u64,
    },
    Blocks(Vec<Block>),
    Scrub {
        request_id: u64,
        request: ScrubRequest,
    },
    ScrubFailed {
        request_id: u64,
        reason: String,
    },
    Token {
        request_id: u64,
        args: ScrubResultArgs,
    },
    Files {
        blobs: Vec<(String, Vec<u8>)>,
    },
    Deliver {
        campaign_id: String,
        token: ScrubToken,
        message: String,
        template_text: String,
    },
    /// Operator asks a telemarketer to resend a campaign it never received.
    FetchLeg {
        campaign_id: String,
    },
    /// Operator asks the scrubber for file blobs it never received.
    FetchFiles {
        locators: Vec<String>,
    },
    /// Unscrubbed list handed to a colluding operator.
    RawList {
        campaign_id: String,
        numbers: Vec<String>,
    },
    /// Subscriber-initiated requests relayed by their operator.
    SetPreference {
        number: String,
        mode: PreferenceMode,
        blocked: Vec<String>,
        block_consented: bool,
    },
    ConsentResponse {
        number: String,
        header: String,
        response: String,
    },
    RevokeConsent {
        number: String,
        header: String,
    },
    Complain {
        complaint_id: String,
        number: String,
        sender: String,
        message: String,
        received_tick: u64,
    },
    /// Harness instruction to a telemarketer.
    RequestConsent {
        number: String,
        header: String,
        template: Digest,
    },
    StartCampaign(CampaignPlan),
}

#[derive(Clone, Debug)]
pub struct Envelope {
    pub from: String,
    pub to: String,
    pub message: Message,
}

/// Reliable, ordered delivery by `(tick, send order)`, except where a fault
/// delays or drops messages to a node.
pub struct Network {
    queue: BTreeMap<(u64, u64), Envelope>,
    seq: u64,
    latency: u64,
    faults: Vec<FaultConfig>,
    rng: ChaCha20Rng,
    pub dropped: u64,
    pub sent: u64,
}

impl Network {
    pub fn new(latency: u64, faults: Vec<FaultConfig>, seed: u64) -> Self {
        Network {
            queue: BTreeMap::new(),
            seq: 0,
            latency,
            faults,
            rng: ChaCha20Rng::seed_from_u64(seed ^ 0x6e65_7477_6f72_6b00),
            dropped: 0,
            sent: 0,
        }
    }

    pub fn send(&mut self, now: u64, from: &str, to: &str, message: Message) {
        self.sent += 1;
        let mut at = now + self.latency;
        for f in self.faults.iter().filter(|f| f.node == to && f.active(now)) {
            match f.fault {
                FaultKind::Delay { ticks } => at += ticks,
                FaultKind::Drop { prob } if self.rng.gen::<f64>() < prob => {
                    self.dropped += 1;
                    return;
                }
                _ => {}
            }
        }
        self.seq += 1;
        self.queue.insert(
            (at, self.seq),
            Envelope {
                from: from.into(),
                to: to.into(),
                message,
            },
        );
    }

    pub fn broadcast<'a>(
        &mut self,
        now: u64,
        from: &str,
        to: impl IntoIterator<Item = &'a String>,
        message: Message,
    ) {
        for id in to {
            self.send(now, from, id, message.clone());
        }
    }

    /// Next message due at or before `now`.
    pub fn pop_due(&mut self, now: u64) -> Option<Envelope> {
        let (&key, _) = self.queue.iter().next()?;
        if key.0 > now {
            return None;
        }
        self.queue.remove(&key)
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn crashed(&self, node: &str, tick: u64) -> bool {
        self.faults
            .iter()
            .any(|f| f.node == node && f.active(tick) && f.fault == FaultKind::Crash)
    }

    pub fn bypassing(&self, node: &str, tick: u64) -> bool {
        self.faults.iter().any(|f| {
            f.node == node && f.active(tick) && f.fault == FaultKind::BypassTokenVerification
        })
    }

    pub fn bypass_nodes(&self) -> BTreeSet<String> {
        self.faults
            .iter()
            .filter(|f| f.fault == FaultKind::BypassTokenVerification)
            .map(|f| f.node.clone())
            .collect()
    }
}
