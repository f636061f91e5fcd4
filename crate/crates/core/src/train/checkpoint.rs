//! Checkpoint container.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SOSFLOW\0"
//! 8       4     format version, u32 little-endian
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header
//! 20+H    8·P   parameters, f64 little-endian, declaration order
//! ```
//!
//! The header records the architecture, block orderings, standardizer,
//! source, parameter count and a CRC-32 of the parameter payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioner::MaskedNet;
use crate::error::{Error, Result};
use crate::flow::{FlowBlock, FlowModel, Source, Standardizer};

pub const MAGIC: &[u8; 8] = b"SOSFLOW\0";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX_LEN: usize = 20;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    d: usize,
    blocks: usize,
    k: usize,
    r: usize,
    hidden_sizes: Vec<usize>,
    orderings: Vec<Vec<usize>>,
    standardizer: Standardizer,
    source: Source,
    n_params: usize,
    payload_crc32: u32,
}

pub fn to_bytes(model: &FlowModel) -> Vec<u8> {
    let params = model.params();
    let mut payload = Vec::with_capacity(params.len() * 8);
    for p in &params {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    let shape = model.shape();
    let header = Header {
        d: model.d(),
        blocks: shape.blocks,
        k: shape.k,
        r: shape.r,
        hidden_sizes: shape.hidden_sizes,
        orderings: model.blocks().iter().map(|b| b.ordering().to_vec()).collect(),
        standardizer: model.standardizer().clone(),
        source: model.source(),
        n_params: params.len(),
        payload_crc32: crc32fast::hash(&payload),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");

    let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

pub fn load_bytes(bytes: &[u8]) -> Result<FlowModel> {
    if bytes.len() < PREFIX_LEN || &bytes[..8] != MAGIC {
        return Err(Error::Format("missing SOSFLOW magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::FormatVersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|h| PREFIX_LEN.checked_add(h))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::Format("header length exceeds file size".into()))?;
    let header: Header = serde_json::from_slice(&bytes[PREFIX_LEN..header_end])
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    let payload = &bytes[header_end..];
    let found = crc32fast::hash(payload);
    if found != header.payload_crc32 {
        return Err(Error::ChecksumMismatch {
            expected: header.payload_crc32,
            found,
        });
    }
    if payload.len() != header.n_params * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header promises {} parameters",
            payload.len(),
            header.n_params
        )));
    }
    if header.orderings.len() != header.blocks {
        return Err(Error::Format("one ordering per block required".into()));
    }

    let blocks = header
        .orderings
        .iter()
        .map(|ord| {
            let net = MaskedNet::build(header.d, &header.hidden_sizes, header.k, header.r, 0)?;
            FlowBlock::new(net, ord.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = FlowModel::from_parts(blocks, header.standardizer, header.source)?;
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    model.set_params(&params)?;
    Ok(model)
}

pub fn save(model: &FlowModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<FlowModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    load_bytes(&bytes)
}
