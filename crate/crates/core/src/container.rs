//! Versioned binary container shared by dataset and weight files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON
//! payload_len  u64   (number of f64 values)
//! payload      payload_len × f64 LE
//! digest       32 bytes SHA-256 over everything above
//! ```

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub(crate) fn encode<H: Serialize>(magic: &[u8; 8], version: u32, header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(header).map_err(|e| Error::schema(e.to_string()))?;
    let mut buf = Vec::with_capacity(8 + 4 + 8 + header.len() + 8 + payload.len() * 8 + 32);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&version.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

pub(crate) fn decode<H: DeserializeOwned>(magic: &[u8; 8], version: u32, bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    let corrupt = |what: &str| Error::Corrupt(what.to_string());
    if bytes.len() < 8 + 4 + 8 + 8 + 32 {
        return Err(corrupt("file shorter than the fixed container fields"));
    }
    if &bytes[..8] != magic {
        return Err(Error::Incompatible(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&bytes[..8])
        )));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != version {
        return Err(Error::Incompatible(format!(
            "schema version {found}, this build reads version {version}"
        )));
    }
    let body_len = bytes.len() - 32;
    let digest = Sha256::digest(&bytes[..body_len]);
    if digest.as_slice() != &bytes[body_len..] {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    let mut pos = 12;
    let header_len = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    if pos + header_len + 8 > body_len {
        return Err(corrupt("header length exceeds file size"));
    }
    let header: H =
        serde_json::from_slice(&bytes[pos..pos + header_len]).map_err(|e| Error::Schema(format!("header: {e}")))?;
    pos += header_len;
    let n = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    if body_len - pos != n * 8 {
        return Err(corrupt("payload length does not match the declared value count"));
    }
    let payload = bytes[pos..body_len]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, payload))
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<Vec<u8>> {
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    Ok(bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
