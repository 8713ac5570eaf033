//! Binary dataset container.
//!
//! ```text
//! b"FLDPDATA" | u32 version | u32 header_len | header JSON
//! | features: cols x rows f64, column-major | u: rows x u32 | s: rows x u32
//! ```
//!
//! The header holds the name, split, shape, schema and the sha256 of the
//! three data blocks, which is verified on read.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Schema, Split, TabularDataset};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"FLDPDATA";
pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    name: String,
    split: Split,
    rows: usize,
    cols: usize,
    schema: Schema,
    content_sha256: String,
}

fn blocks(ds: &TabularDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(ds.features.len() * 8 + ds.len() * 8);
    for col in ds.features.columns() {
        for v in col {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for labels in [&ds.u, &ds.s] {
        for &l in labels.iter() {
            out.extend_from_slice(&(l as u32).to_le_bytes());
        }
    }
    out
}

pub(super) fn content_hash(ds: &TabularDataset) -> String {
    hex::encode(Sha256::digest(blocks(ds)))
}

pub(super) fn write<W: Write>(ds: &TabularDataset, mut w: W) -> Result<()> {
    let data = blocks(ds);
    let header = Header {
        version: DATASET_FORMAT_VERSION,
        name: ds.name.clone(),
        split: ds.split,
        rows: ds.len(),
        cols: ds.dim(),
        schema: ds.schema.clone(),
        content_sha256: hex::encode(Sha256::digest(&data)),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_FORMAT_VERSION.to_le_bytes())?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&data)?;
    w.flush()?;
    Ok(())
}

pub(super) fn read<R: Read>(mut r: R) -> Result<TabularDataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("not a dataset file".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != DATASET_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    r.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;

    let (rows, cols) = (header.rows, header.cols);
    let mut data = vec![0u8; rows * cols * 8 + rows * 8];
    r.read_exact(&mut data)?;
    let digest = hex::encode(Sha256::digest(&data));
    if digest != header.content_sha256 {
        return Err(Error::Format(format!("content hash mismatch: header {} vs data {digest}", header.content_sha256)));
    }
    let (feat, labels) = data.split_at(rows * cols * 8);
    let values: Vec<f64> = feat.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    // column-major on disk
    let features = Array2::from_shape_vec((cols, rows), values)
        .map_err(|e| Error::Format(e.to_string()))?
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    let mut ints = labels.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize);
    let u: Vec<usize> = ints.by_ref().take(rows).collect();
    let s: Vec<usize> = ints.collect();
    TabularDataset::new(header.name, header.split, features, u, s, header.schema)
}
