//! Permissioned ledger: proposals, endorsement with read-write sets,
//! ordering into hash-chained blocks, and MVCC validation at commit.

pub mod block;
pub mod chain;
pub mod dump;
pub mod genesis;
pub mod orderer;
pub mod peer;
pub mod policy;
pub mod rwset;
pub mod state;
pub mod tx;

pub use block::Block;
pub use chain::{verify_chain, CommitError, CommitEvent, CommitOutcome, InvalidReason, Ledger};
pub use genesis::{genesis_block, GenesisArgs, GenesisFile};
pub use orderer::{order_and_cut_block, BatchConfig, OrderingService, PendingTx, SoloOrderer};
pub use peer::{propose_transaction, simulate, EndorseError, Endorser, ProposeError};
pub use policy::{evaluate_policy, EndorsementPolicy, PolicyError, PolicyRule, PolicyTable};
pub use rwset::{ReadWriteSet, TxContext};
pub use state::{StateKey, StateRead, Version, WorldState};
pub use tx::{EndorsedTx, Endorsement, Proposal, TransactionPayload, TxType};
