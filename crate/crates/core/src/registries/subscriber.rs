use crate::crypto::{ConsortiumKey, Digest};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed subscriber number")]
pub struct MalformedNumber;

/// Normalize to twelve digits, `"91"` followed by the ten-digit national
/// number. Accepts spaces, dashes, a leading `+91`, `91` or trunk `0`.
pub fn normalize_number(input: &str) -> Result<String, MalformedNumber> {
    let trimmed = input.trim();
    let body = trimmed.strip_prefix('+').unwrap_or(trimmed);
    let mut digits = String::with_capacity(12);
    for c in body.chars() {
        match c {
            '0'..='9' => digits.push(c),
            ' ' | '-' => {}
            _ => return Err(MalformedNumber),
        }
    }
    let national = match digits.len() {
        10 => digits.as_str(),
        11 if digits.starts_with('0') => &digits[1..],
        12 if digits.starts_with("91") => &digits[2..],
        _ => return Err(MalformedNumber),
    };
    if trimmed.starts_with('+') && digits.len() != 12 {
        return Err(MalformedNumber);
    }
    Ok(format!("91{national}"))
}

/// Keyed hash of the normalized number: the only form in which subscriber
/// numbers reach the ledger.
pub fn hash_subscriber(phone: &str, key: &ConsortiumKey) -> Result<Digest, MalformedNumber> {
    Ok(key.keyed_hash(normalize_number(phone)?.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_variants_agree() {
        let k = ConsortiumKey::new(b"consortium-test".to_vec());
        let forms = [
            "09876543210",
            "+91 98765 43210",
            "9876543210",
            "919876543210",
            "98765-43210",
        ];
        let digests: Vec<_> = forms
            .iter()
            .map(|f| hash_subscriber(f, &k).unwrap())
            .collect();
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
        // python3: hmac.new(b"consortium-test", b"919876543210", sha256).hexdigest()
        assert_eq!(
            digests[0].to_hex(),
            "485c2944c52e700e50e50a9781805c79978711c4173ae85db8d8fccb2e5a7ba7"
        );
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "987654321",
            "",
            "+9876543210",
            "98765x43210",
            "0919876543210",
            "12345678901",
        ] {
            assert_eq!(normalize_number(bad), Err(MalformedNumber), "{bad}");
        }
    }
}
