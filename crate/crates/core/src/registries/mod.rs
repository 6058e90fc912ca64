//! Header, template, preference and consent registries and their validators.

pub mod consent;
pub mod header;
pub mod preference;
pub mod subscriber;
pub mod template;

use serde::de::DeserializeOwned;

use crate::codec;
use crate::ledger::state::StateRead;

pub use consent::{ConsentChannel, ConsentRecord, ConsentStatus};
pub use header::{HeaderRecord, PrincipalEntity};
pub use preference::{Category, PreferenceMode, PreferenceRecord, CATEGORIES};
pub use subscriber::{hash_subscriber, normalize_number, MalformedNumber};
pub use template::{match_template, TemplateKind, TemplateRecord};

/// Decode a committed value outside a transaction context.
pub fn read_as<T: DeserializeOwned>(state: &dyn StateRead, key: &[u8]) -> Option<T> {
    state.read(key).and_then(|(v, _)| codec::decode(v).ok())
}
