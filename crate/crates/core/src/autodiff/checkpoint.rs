//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"FLDPCKPT" | u32 version | u32 header_len | header JSON
//! | for each MLP, each layer: weights [in*out] f64 row-major, bias [out] f64
//! | for each block: [rows*cols] f64 row-major
//! ```
//!
//! The JSON header names the MLPs with their [`MlpSpec`]s, the extra blocks
//! with their shapes, and carries free-form metadata.

use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"FLDPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    mlps: Vec<(String, MlpSpec)>,
    blocks: Vec<(String, usize, usize)>,
    meta: serde_json::Value,
}

/// Named MLPs plus named dense blocks plus metadata.
#[derive(Debug, Clone)]
pub struct Checkpoint<T: Scalar = f64> {
    pub mlps: Vec<(String, Mlp<T>)>,
    pub blocks: Vec<(String, Array2<T>)>,
    pub meta: serde_json::Value,
}

fn write_f64s<W: Write, T: Scalar>(w: &mut W, a: &Array2<T>) -> Result<()> {
    for v in a.iter() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn read_array<R: Read, T: Scalar>(r: &mut R, rows: usize, cols: usize) -> Result<Array2<T>> {
    let mut buf = [0u8; 8];
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        values.push(T::of(f64::from_le_bytes(buf)));
    }
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Format(e.to_string()))
}

impl<T: Scalar> Checkpoint<T> {
    pub fn mlp(&self, name: &str) -> Option<&Mlp<T>> {
        self.mlps.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn block(&self, name: &str) -> Option<&Array2<T>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            mlps: self.mlps.iter().map(|(n, m)| (n.clone(), m.spec().clone())).collect(),
            blocks: self.blocks.iter().map(|(n, b)| (n.clone(), b.nrows(), b.ncols())).collect(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        for (_, m) in &self.mlps {
            for (wt, b) in m.weights().iter().zip(m.biases()) {
                write_f64s(&mut w, wt)?;
                write_f64s(&mut w, b)?;
            }
        }
        for (_, b) in &self.blocks {
            write_f64s(&mut w, b)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        r.read_exact(&mut word)?;
        let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;

        let mut mlps = Vec::new();
        for (name, spec) in header.mlps {
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for pair in spec.widths.windows(2) {
                weights.push(read_array(&mut r, pair[0], pair[1])?);
                biases.push(read_array(&mut r, 1, pair[1])?);
            }
            mlps.push((name, Mlp::from_parts(spec, weights, biases)?));
        }
        let mut blocks = Vec::new();
        for (name, rows, cols) in header.blocks {
            blocks.push((name, read_array(&mut r, rows, cols)?));
        }
        Ok(Self { mlps, blocks, meta: header.meta })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
