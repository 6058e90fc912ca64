//! Ledger dump file: `"TLCH"`, version byte `0x01`, then one
//! `u32` big-endian length plus canonical block bytes per block.

use std::io::{self, Write};
use std::path::Path;

use super::block::Block;
use super::chain::verify_chain;

pub const MAGIC: &[u8; 4] = b"TLCH";
pub const VERSION: u8 = 0x01;

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("not a ledger dump (bad magic or version)")]
    BadHeader,
    #[error("block {0} is truncated or undecodable")]
    BadBlock(u64),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_dump(blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + blocks.len() * 256);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for b in blocks {
        let bytes = b.to_bytes();
        out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

/// Byte ranges of each block frame's payload.
fn frames(bytes: &[u8]) -> Result<Vec<Result<&[u8], ()>>, DumpError> {
    if bytes.len() < 5 || &bytes[..4] != MAGIC || bytes[4] != VERSION {
        return Err(DumpError::BadHeader);
    }
    let mut out = Vec::new();
    let mut pos = 5;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            out.push(Err(()));
            break;
        }
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if bytes.len() - pos < len {
            out.push(Err(()));
            break;
        }
        out.push(Ok(&bytes[pos..pos + len]));
        pos += len;
    }
    Ok(out)
}

pub fn decode_dump(bytes: &[u8]) -> Result<Vec<Block>, DumpError> {
    frames(bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            f.ok()
                .and_then(|b| Block::from_bytes(b).ok())
                .ok_or(DumpError::BadBlock(i as u64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainCheck {
    Ok { blocks: usize },
    FirstBadHeight(u64),
}

/// Integrity check over raw dump bytes. Undecodable frames count as bad at
/// their position in the file.
pub fn verify_dump(bytes: &[u8]) -> Result<ChainCheck, DumpError> {
    let mut blocks = Vec::new();
    for (i, f) in frames(bytes)?.into_iter().enumerate() {
        match f.ok().and_then(|b| Block::from_bytes(b).ok()) {
            Some(b) => blocks.push(b),
            None => {
                // Report the earliest failure: a structurally earlier block
                // may also be inconsistent.
                return Ok(match verify_chain(&blocks) {
                    Err(h) => ChainCheck::FirstBadHeight(h),
                    Ok(()) => ChainCheck::FirstBadHeight(i as u64),
                });
            }
        }
    }
    if blocks.is_empty() {
        return Ok(ChainCheck::FirstBadHeight(0));
    }
    Ok(match verify_chain(&blocks) {
        Ok(()) => ChainCheck::Ok {
            blocks: blocks.len(),
        },
        Err(h) => ChainCheck::FirstBadHeight(h),
    })
}

/// Write via a temporary sibling file and rename, so readers never see a
/// partial dump.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
