//! Single-process consortium without a network: every member endorses
//! against the one shared ledger and blocks are cut on demand. Used by tests,
//! benchmarks and the command-line tool.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::contract::Rejection;
use crate::crypto::{ConsortiumKey, Digest, KeyPair};
use crate::ledger::chain::committed_nonce;
use crate::ledger::{
    genesis_block, propose_transaction, Block, CommitOutcome, EndorseError, EndorsedTx, Endorser,
    GenesisArgs, InvalidReason, Ledger, PolicyTable, TransactionPayload, TxType,
};
use crate::membership::{
    AdmitArgs, ParticipantIdentity, RegulatorDb, Role, TelemarketerRegistration,
};
use crate::params::ConsortiumParams;
use crate::registries::header::{DelegateArgs, RegisterHeaderArgs, RegisterPeArgs};
use crate::registries::preference::UpdatePreferenceArgs;
use crate::registries::template::{template_id, RegisterTemplateArgs, TemplateKind};
use crate::registries::{hash_subscriber, PreferenceMode};
use crate::scrubbing::{MirrorIndex, OperatorRouting, Scrubber};

pub const SCRUBBER: &str = "scrubber-1";
pub const OBSERVER: &str = "observer-1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DevnetError {
    #[error("no key for {0}")]
    UnknownMember(String),
    #[error("rejected by every endorser: {0:?}")]
    Rejected(Vec<EndorseError>),
    #[error("endorsements do not satisfy the policy")]
    PolicyUnmet,
    #[error("marked invalid at commit: {0}")]
    Invalid(InvalidReason),
}

impl DevnetError {
    /// The validator's reason, when some endorser simulated and refused.
    pub fn rejection(&self) -> Option<&Rejection> {
        match self {
            DevnetError::Rejected(errs) => errs.iter().find_map(|e| match e {
                EndorseError::ValidatorRejected(r) => Some(r),
                _ => None,
            }),
            _ => None,
        }
    }
}

/// Operators `op-1..op-n` on prefixes `9191..`, one scrubber, one observer.
pub struct Devnet {
    pub ledger: Ledger,
    pub key: ConsortiumKey,
    pub regulator: RegulatorDb,
    pub routing: OperatorRouting,
    pub tick: u64,
    keys: BTreeMap<String, KeyPair>,
    endorsers: BTreeMap<String, Endorser>,
    nonces: BTreeMap<String, u64>,
    pending: Vec<EndorsedTx>,
    seed: u64,
}

pub fn operator_id(i: usize) -> String {
    format!("op-{}", i + 1)
}

pub fn operator_prefix(i: usize) -> String {
    format!("919{}", i + 1)
}

impl Devnet {
    pub fn new(seed: u64, operators: usize, params: ConsortiumParams) -> Self {
        let mut members: Vec<(String, Role, Option<String>)> = (0..operators)
            .map(|i| (operator_id(i), Role::Operator, Some(format!("R{}", i + 1))))
            .collect();
        members.push((SCRUBBER.into(), Role::Scrubber, None));
        members.push((OBSERVER.into(), Role::Observer, None));
        let mut keys = BTreeMap::new();
        let mut endorsers = BTreeMap::new();
        let mut participants = Vec::new();
        for (id, role, region) in members {
            let kp = KeyPair::derive(format!("ucc-devnet/{seed}/{id}").as_bytes());
            participants.push(ParticipantIdentity {
                id: id.clone(),
                role,
                public_key: kp.public(),
                region,
                admitted_tick: 0,
                revoked: false,
            });
            endorsers.insert(id.clone(), Endorser::new(&id, role, kp.clone()));
            keys.insert(id, kp);
        }
        let genesis = GenesisArgs {
            participants,
            params,
            policies: PolicyTable::default(),
        };
        let ledger = Ledger::from_genesis(genesis_block(&genesis)).expect("fresh genesis");
        let routing = OperatorRouting::new(
            (0..operators).map(|i| (operator_prefix(i), operator_id(i))),
            None,
        );
        Devnet {
            ledger,
            key: ConsortiumKey::new(format!("devnet-secret-{seed}").into_bytes()),
            regulator: RegulatorDb::default(),
            routing,
            tick: 0,
            keys,
            endorsers,
            nonces: BTreeMap::new(),
            pending: Vec::new(),
            seed,
        }
    }

    pub fn key_of(&self, id: &str) -> Option<&KeyPair> {
        self.keys.get(id)
    }

    pub fn subscriber(&self, number: &str) -> Digest {
        hash_subscriber(number, &self.key).expect("well-formed number")
    }

    /// Endorse `args` with every member the policy admits and queue the
    /// transaction for the next block.
    pub fn submit<A: Serialize>(
        &mut self,
        proposer: &str,
        tx_type: TxType,
        args: &A,
    ) -> Result<Digest, DevnetError> {
        let kp = self
            .keys
            .get(proposer)
            .ok_or_else(|| DevnetError::UnknownMember(proposer.into()))?;
        let last = committed_nonce(self.ledger.state(), proposer)
            .max(self.nonces.get(proposer).copied().unwrap_or(0));
        let nonce = last + 1;
        let payload = TransactionPayload::new(tx_type, args, proposer, nonce, self.tick);
        let proposal = propose_transaction(&self.ledger, kp, payload)
            .map_err(|_| DevnetError::UnknownMember(proposer.into()))?;
        self.nonces.insert(proposer.to_string(), nonce);
        let mut endorsements = Vec::new();
        let mut errors = Vec::new();
        let mut rwset = None;
        for e in self.endorsers.values_mut() {
            match e.endorse(&self.ledger, Some(&self.regulator), &proposal) {
                Ok((en, rw)) => {
                    rwset.get_or_insert(rw);
                    endorsements.push(en);
                }
                Err(EndorseError::NotInPolicy) => {}
                Err(err) => errors.push(err),
            }
        }
        let Some(rwset) = rwset else {
            return Err(DevnetError::Rejected(errors));
        };
        let roster = self.ledger.roster();
        let endorsers = endorsements.iter().map(|e| e.endorser.clone()).collect();
        if !self
            .ledger
            .policies()
            .policy_for(tx_type)
            .rule
            .evaluate(&endorsers, &roster)
        {
            return Err(DevnetError::PolicyUnmet);
        }
        let tx = EndorsedTx {
            proposal,
            rwset,
            endorsements,
        };
        let id = tx.tx_id();
        self.pending.push(tx);
        Ok(id)
    }

    /// Order everything queued into one block stamped with the current tick.
    pub fn cut(&mut self) -> CommitOutcome {
        let txs = std::mem::take(&mut self.pending);
        let block = Block::new(
            self.ledger.height() + 1,
            self.ledger.tip_hash(),
            self.tick,
            txs,
        );
        self.ledger.commit(block).expect("block extends the tip")
    }

    /// Hand back queued transactions without ordering them.
    pub fn take_pending(&mut self) -> Vec<EndorsedTx> {
        std::mem::take(&mut self.pending)
    }

    /// Submit alone in a block and require it to commit as valid.
    pub fn commit<A: Serialize>(
        &mut self,
        proposer: &str,
        tx_type: TxType,
        args: &A,
    ) -> Result<CommitOutcome, DevnetError> {
        self.submit(proposer, tx_type, args)?;
        let out = self.cut();
        match out.invalid.first() {
            Some((_, reason)) => Err(DevnetError::Invalid(*reason)),
            None => Ok(out),
        }
    }

    /// Register, admit and fully set up a telemarketer owning `headers`,
    /// with the given templates.
    pub fn add_telemarketer(
        &mut self,
        tm_id: &str,
        headers: &[&str],
        templates: &[(&str, &str, TemplateKind)],
    ) -> Result<Vec<Digest>, DevnetError> {
        let kp = KeyPair::derive(format!("ucc-devnet/{}/{tm_id}", self.seed).as_bytes());
        let receipt = format!("RCPT-{tm_id}");
        self.regulator.insert(tm_id, &receipt);
        self.keys.insert(tm_id.to_string(), kp.clone());
        let reg = TelemarketerRegistration::new(tm_id, &receipt, Role::Telemarketer, &kp);
        self.commit(
            tm_id,
            TxType::RegisterTelemarketer,
            &AdmitArgs::Register(reg),
        )?;
        self.endorsers.insert(
            tm_id.to_string(),
            Endorser::new(tm_id, Role::Telemarketer, kp),
        );
        let pe_id = format!("PE-{tm_id}");
        self.commit(
            tm_id,
            TxType::RegisterPrincipalEntity,
            &RegisterPeArgs {
                pe_id: pe_id.clone(),
                name: format!("{tm_id} Ltd"),
                documents_ref: format!("docs/{tm_id}"),
            },
        )?;
        for h in headers {
            self.commit(
                tm_id,
                TxType::RegisterHeader,
                &RegisterHeaderArgs {
                    pe_id: pe_id.clone(),
                    header: h.to_string(),
                    approved: true,
                },
            )?;
            self.commit(
                tm_id,
                TxType::DelegateHeader,
                &DelegateArgs {
                    header: h.to_string(),
                    tm_id: tm_id.to_string(),
                },
            )?;
        }
        let mut ids = Vec::new();
        for (header, text, kind) in templates {
            let tx = if *kind == TemplateKind::Consent {
                TxType::RegisterConsentTemplate
            } else {
                TxType::RegisterTemplate
            };
            self.commit(
                tm_id,
                tx,
                &RegisterTemplateArgs {
                    header: header.to_string(),
                    text: text.to_string(),
                    kind: *kind,
                },
            )?;
            ids.push(template_id(header, text));
        }
        Ok(ids)
    }

    pub fn preference_args(
        &self,
        operator: &str,
        number: &str,
        mode: PreferenceMode,
        blocked: &[&str],
    ) -> UpdatePreferenceArgs {
        UpdatePreferenceArgs {
            key: self.subscriber(number),
            operator: operator.to_string(),
            mode,
            blocked: blocked.iter().map(|s| s.to_string()).collect(),
            block_consented: false,
        }
    }

    pub fn scrubber(&self) -> Scrubber {
        let kp = self.keys[SCRUBBER].clone();
        Scrubber::new(
            SCRUBBER,
            kp,
            self.key.clone(),
            self.routing.clone(),
            self.seed,
        )
    }

    pub fn mirror(&self) -> MirrorIndex {
        MirrorIndex::from_state(self.ledger.state())
    }
}
