//! Model checkpoints: named parameter blocks stored as f32.
//!
//! Layout (little-endian): magic `GCKP`, version u16, header text, block
//! count u32, then per block its name, rank u32, dimensions u32 each and the
//! values as f32. Strings are a u32 byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use super::{Network, Scalar};
use crate::binio::{Reader, Writer};
use crate::pmu::sha256_hex;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GCKP";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form description, e.g. the architecture and run configuration.
    pub header: String,
    pub blocks: Vec<ParamBlock>,
}

impl Checkpoint {
    pub fn from_network<T: Scalar>(net: &Network<T>, header: &str) -> Self {
        let blocks = net
            .params()
            .iter()
            .map(|p| ParamBlock {
                name: p.name.clone(),
                shape: p.shape().to_vec(),
                values: p.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect();
        Checkpoint { header: header.to_string(), blocks }
    }

    /// Copies the stored values into a network of the same architecture.
    pub fn load_into<T: Scalar>(&self, net: &mut Network<T>) -> Result<()> {
        let mut params = net.params_mut();
        if params.len() != self.blocks.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameter blocks, model has {}",
                self.blocks.len(),
                params.len()
            )));
        }
        for (p, b) in params.iter().zip(&self.blocks) {
            if p.name != b.name || p.shape() != b.shape.as_slice() {
                return Err(Error::Format(format!(
                    "checkpoint block {} {:?} does not match model parameter {} {:?}",
                    b.name,
                    b.shape,
                    p.name,
                    p.shape()
                )));
            }
        }
        for (p, b) in params.iter_mut().zip(&self.blocks) {
            for (w, &v) in p.value.data.iter_mut().zip(&b.values) {
                *w = T::of_f64(v as f64);
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::with_capacity(64 + self.blocks.iter().map(|b| b.values.len() * 4 + 64).sum::<usize>());
        w.bytes(CHECKPOINT_MAGIC);
        w.u16(CHECKPOINT_VERSION);
        w.str(&self.header);
        w.len(self.blocks.len(), "parameter blocks")?;
        for b in &self.blocks {
            if b.shape.iter().product::<usize>() != b.values.len() {
                return Err(Error::Shape(format!("block {}: shape {:?} vs {} values", b.name, b.shape, b.values.len())));
            }
            w.str(&b.name);
            w.len(b.shape.len(), "dimensions")?;
            for &d in &b.shape {
                w.len(d, "dimension size")?;
            }
            for &v in &b.values {
                w.f32(v);
            }
        }
        Ok(w.into_inner())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u16("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header = r.str("header")?;
        let n = r.u32("block count")? as u64;
        let n = r.count(n, 8, "parameter blocks")?;
        let mut blocks = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.str("block name")?;
            let rank = r.u32("rank")? as u64;
            let rank = r.count(rank, 4, "dimensions")?;
            let shape = (0..rank).map(|_| r.u32("dimension").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1u64, |a, &d| a.checked_mul(d as u64)).unwrap_or(u64::MAX);
            let len = r.count(len, 4, "values")?;
            let raw = r.take(len * 4, "values")?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            blocks.push(ParamBlock { name, shape, values });
        }
        r.finish()?;
        Ok(Checkpoint { header, blocks })
    }

    /// Writes the checkpoint and returns the SHA-256 of its bytes.
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        fs::write(path, &bytes)?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
