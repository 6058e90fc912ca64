//! Scrubbing service: mirrored preference index, set-difference scrubs and
//! the token that anchors each scrub to the global state.

pub mod mirror;
pub mod scrub;
pub mod token;

pub use mirror::{is_deliverable, MirrorError, MirrorIndex};
pub use scrub::{
    file_bytes, parse_file, partition, FileRef, ObjectStore, OperatorRouting, Partition,
    ScrubCounts, ScrubError, ScrubRequest, ScrubResultArgs, ScrubToken, Scrubber,
};
pub use token::{load_scrub, rescrub_discrepancies, scrub_key, verify_scrub_token, TokenError};
