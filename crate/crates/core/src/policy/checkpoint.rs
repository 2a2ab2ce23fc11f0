//! Binary parameter file.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "LHPOLICY"
//! 8       4     format version (u32 LE)
//! 12      32    vocab_size, embed_dim, hidden_dim, layers (u64 LE each)
//! 44      8     vocabulary fingerprint (u64 LE)
//! 52      8     update counter (u64 LE)
//! 60      8     parameter count (u64 LE)
//! 68      8·n   parameters (f64 LE)
//! ```

use std::fs;
use std::path::Path;

use super::{PolicyParameters, ShapeMeta, Vocabulary};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LHPOLICY";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 68;

pub fn encode(params: &PolicyParameters, vocab: &Vocabulary) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let s = params.shape;
    for d in [s.vocab_size, s.embed_dim, s.hidden_dim, s.layers] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&vocab.fingerprint().to_le_bytes());
    out.extend_from_slice(&params.version.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
}

/// Decodes a parameter file, checking it was written for `vocab`.
pub fn decode(bytes: &[u8], vocab: &Vocabulary) -> Result<PolicyParameters> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Input("not a policy checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4-byte slice"));
    if version != FORMAT_VERSION {
        return Err(Error::Input(format!("unsupported checkpoint format version {version}")));
    }
    let dim = |i: usize| read_u64(bytes, 12 + 8 * i) as usize;
    let shape = ShapeMeta { vocab_size: dim(0), embed_dim: dim(1), hidden_dim: dim(2), layers: dim(3) };
    let fingerprint = read_u64(bytes, 44);
    if fingerprint != vocab.fingerprint() {
        return Err(Error::Input("checkpoint was written for a different vocabulary".into()));
    }
    let updates = read_u64(bytes, 52);
    let n = read_u64(bytes, 60) as usize;
    if bytes.len() != HEADER_LEN + 8 * n {
        return Err(Error::Input(format!(
            "checkpoint holds {} payload bytes, header declares {n} parameters",
            bytes.len() - HEADER_LEN
        )));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    PolicyParameters::new(values, shape, updates)
}

pub fn save(path: &Path, params: &PolicyParameters, vocab: &Vocabulary) -> Result<()> {
    crate::io::write_atomic(path, &encode(params, vocab))
}

pub fn load(path: &Path, vocab: &Vocabulary) -> Result<PolicyParameters> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, vocab)
}
