//! Canonical byte encoding shared by every ledger structure.
//!
//! Fields are written in declaration order, integers big-endian and fixed
//! width, variable-length values (strings, byte vectors, sequences) carry a
//! u64 big-endian length prefix. Maps are only ever serialized as ordered
//! collections, so identical logical values always produce identical bytes.

use bincode::Options;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Upper bound on a single decoded object. Corrupted length prefixes fail
/// fast instead of attempting huge allocations.
const DECODE_LIMIT: u64 = 1 << 30;

#[derive(Debug, thiserror::Error)]
#[error("canonical decode failed: {0}")]
pub struct CodecError(#[from] bincode::Error);

fn options() -> impl Options {
    bincode::DefaultOptions::new()
        .with_big_endian()
        .with_fixint_encoding()
        .with_limit(DECODE_LIMIT)
        .reject_trailing_bytes()
}

pub fn encode<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    options()
        .serialize(value)
        .expect("in-memory canonical encoding cannot fail")
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CodecError> {
    Ok(options().deserialize(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct Sample {
        a: u32,
        name: String,
        flag: bool,
    }

    #[test]
    fn layout_is_big_endian_length_prefixed() {
        let bytes = encode(&Sample {
            a: 0x0102_0304,
            name: "AB".into(),
            flag: true,
        });
        assert_eq!(
            bytes,
            vec![1, 2, 3, 4, 0, 0, 0, 0, 0, 0, 0, 2, b'A', b'B', 1]
        );
    }

    #[test]
    fn rejects_trailing_and_invalid_bool() {
        let mut bytes = encode(&Sample {
            a: 1,
            name: String::new(),
            flag: false,
        });
        bytes.push(0);
        assert!(decode::<Sample>(&bytes).is_err());
        let mut bad = encode(&Sample {
            a: 1,
            name: String::new(),
            flag: false,
        });
        *bad.last_mut().unwrap() = 7;
        assert!(decode::<Sample>(&bad).is_err());
    }
}
