//! Consortium ledger for commercial-communication compliance.
//!
//! Participants (operators, telemarketers, scrubbers, an observer) share a
//! permissioned, hash-chained ledger holding header, template, preference and
//! consent registries. Scrubbers filter campaign lists against the registry
//! and anchor each decision to the global state hash; operators deliver only
//! against committed tokens; complaints are audited by replaying the ledger.

pub mod campaign;
pub mod codec;
pub mod contract;
pub mod crypto;
pub mod ledger;
pub mod membership;
pub mod params;
pub mod registries;
pub mod scrubbing;
pub mod sim;

pub use crypto::{ConsortiumKey, Digest, KeyPair, PublicKey, Signature};
pub use ledger::{Block, EndorsedTx, Ledger, ReadWriteSet, TransactionPayload, TxType, WorldState};
pub use membership::{ParticipantIdentity, Role};
pub use params::ConsortiumParams;
