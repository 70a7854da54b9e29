//! LFD1 container.
//!
//! ```text
//! "LFD1" | u32 LE header length | UTF-8 JSON header | f32 LE payload
//! ```
//!
//! The header is `{version, attribute, layers, dim, count, paired, provenance}`.
//! Paired payloads are pair-major with the positive latent first; every latent
//! is row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::latent::LatentCode;
use crate::pair::{assemble_with_provenance, LatentBatch, PairDataset};
use crate::scalar::Scalar;

use super::write_atomic;

pub const LFD_MAGIC: &[u8; 4] = b"LFD1";
pub const LFD_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfdHeader {
    pub version: u64,
    pub attribute: String,
    pub layers: usize,
    pub dim: usize,
    pub count: usize,
    pub paired: bool,
    #[serde(default)]
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Container<T: Scalar> {
    Pairs(PairDataset<T>),
    Latents(LatentBatch<T>),
}

fn encode<'a, T: Scalar + 'a>(header: &LfdHeader, latents: impl Iterator<Item = &'a LatentCode<T>>) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let n = header.count * header.layers * header.dim * if header.paired { 2 } else { 1 };
    let mut out = Vec::with_capacity(8 + json.len() + 4 * n);
    out.extend_from_slice(LFD_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for w in latents {
        for v in w.as_slice() {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    out
}

pub fn encode_dataset<T: Scalar>(ds: &PairDataset<T>) -> Vec<u8> {
    let header = LfdHeader {
        version: LFD_VERSION,
        attribute: ds.attribute().to_owned(),
        layers: ds.layers(),
        dim: ds.dim(),
        count: ds.len(),
        paired: true,
        provenance: ds.provenance().to_vec(),
    };
    encode(&header, ds.pairs().iter().flat_map(|(p, n)| [p, n]))
}

pub fn encode_latents<T: Scalar>(batch: &LatentBatch<T>) -> Vec<u8> {
    let header = LfdHeader {
        version: LFD_VERSION,
        attribute: batch.label.clone(),
        layers: batch.layers(),
        dim: batch.dim(),
        count: batch.len(),
        paired: false,
        provenance: batch.provenance.clone(),
    };
    encode(&header, batch.latents().iter())
}

pub fn decode_container<T: Scalar>(bytes: &[u8]) -> Result<Container<T>> {
    if bytes.len() < 4 || &bytes[..4] != LFD_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(Error::TruncatedPayload {
            expected: 8,
            got: bytes.len(),
        });
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if body.len() < header_len {
        return Err(Error::TruncatedPayload {
            expected: 8 + header_len,
            got: bytes.len(),
        });
    }
    let header: LfdHeader = serde_json::from_slice(&body[..header_len]).map_err(|e| Error::BadHeader(e.to_string()))?;
    if header.version != LFD_VERSION {
        return Err(Error::UnsupportedVersion(header.version));
    }
    if header.layers == 0 || header.dim == 0 || header.count == 0 {
        return Err(Error::ShapeMismatch(format!(
            "header declares {} latents of {}x{}",
            header.count, header.layers, header.dim
        )));
    }
    let per = header.layers * header.dim;
    let n_latents = header.count * if header.paired { 2 } else { 1 };
    let payload = &body[header_len..];
    let expected = n_latents * per * 4;
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::ShapeMismatch(format!(
            "{} trailing payload bytes",
            payload.len() - expected
        )));
    }
    let provenance = match header.provenance.len() {
        0 => vec![String::new(); header.count],
        n if n == header.count => header.provenance.clone(),
        n => {
            return Err(Error::ShapeMismatch(format!(
                "{n} provenance entries for {} records",
                header.count
            )))
        }
    };

    let latents = payload
        .chunks_exact(per * 4)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|b| T::from_f32_exact(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
                .collect();
            LatentCode::from_flat(header.layers, header.dim, data)
        })
        .collect::<Result<Vec<_>>>()?;

    if header.paired {
        let mut it = latents.into_iter();
        let mut pairs = Vec::with_capacity(header.count);
        while let (Some(p), Some(n)) = (it.next(), it.next()) {
            pairs.push((p, n));
        }
        Ok(Container::Pairs(assemble_with_provenance(
            &header.attribute,
            pairs,
            provenance,
        )?))
    } else {
        Ok(Container::Latents(LatentBatch::with_provenance(
            &header.attribute,
            latents,
            provenance,
        )?))
    }
}

/// Swap the latents of an existing container, keeping its header bytes
/// verbatim. `latents` must match the original count and shape (pairs
/// flattened positive-first).
pub fn replace_payload<T: Scalar>(original: &[u8], latents: &[LatentCode<T>]) -> Result<Vec<u8>> {
    let (expected, shape) = match decode_container::<T>(original)? {
        Container::Pairs(ds) => (2 * ds.len(), (ds.layers(), ds.dim())),
        Container::Latents(b) => (b.len(), (b.layers(), b.dim())),
    };
    if latents.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "container holds {expected} latents, got {}",
            latents.len()
        )));
    }
    if let Some(w) = latents.iter().find(|w| w.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "latent is {}x{}, container is {}x{}",
            w.layers(),
            w.dim(),
            shape.0,
            shape.1
        )));
    }
    let header_len = u32::from_le_bytes(original[4..8].try_into().expect("4 bytes")) as usize;
    let mut out = original[..8 + header_len].to_vec();
    for w in latents {
        for v in w.as_slice() {
            out.extend_from_slice(&v.to_f32_lossy().to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset<T: Scalar>(bytes: &[u8]) -> Result<PairDataset<T>> {
    match decode_container(bytes)? {
        Container::Pairs(ds) => Ok(ds),
        Container::Latents(_) => Err(Error::ShapeMismatch("container holds unpaired latents".into())),
    }
}

pub fn decode_latents<T: Scalar>(bytes: &[u8]) -> Result<LatentBatch<T>> {
    match decode_container(bytes)? {
        Container::Latents(b) => Ok(b),
        Container::Pairs(_) => Err(Error::ShapeMismatch("container holds latent pairs".into())),
    }
}

pub fn save_dataset<T: Scalar>(path: impl AsRef<Path>, ds: &PairDataset<T>) -> Result<()> {
    write_atomic(path, &encode_dataset(ds))
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<PairDataset<T>> {
    decode_dataset(&std::fs::read(path)?)
}

pub fn save_latents<T: Scalar>(path: impl AsRef<Path>, batch: &LatentBatch<T>) -> Result<()> {
    write_atomic(path, &encode_latents(batch))
}

pub fn load_latents<T: Scalar>(path: impl AsRef<Path>) -> Result<LatentBatch<T>> {
    decode_latents(&std::fs::read(path)?)
}

pub fn load_container<T: Scalar>(path: impl AsRef<Path>) -> Result<Container<T>> {
    decode_container(&std::fs::read(path)?)
}

/// Hex SHA-256 of the dataset's LFD1 encoding.
pub fn dataset_hash<T: Scalar>(ds: &PairDataset<T>) -> String {
    Sha256::digest(encode_dataset(ds))
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
