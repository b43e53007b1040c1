//! Versioned binary model format (`.tsnn`).
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic "TSNNMODL" (8 bytes)
//! version u32
//! n u32, ng u32
//! bn1 epsilon f64, bn1 momentum f64, bn2 epsilon f64, bn2 momentum f64
//! f64 arrays, lengths implied by (n, ng), in order:
//!   conv1.kernel, conv1.bias,
//!   bn1.gamma, bn1.beta, bn1.running_mean, bn1.running_var,
//!   conv2.kernel, conv2.bias,
//!   bn2.gamma, bn2.beta, bn2.running_mean, bn2.running_var,
//!   dense.weights, dense.bias
//! ```

use std::path::Path;

use super::model::{NetworkDims, NetworkModel};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"TSNNMODL";
pub const MODEL_VERSION: u32 = 1;

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("model stream truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn serialize(model: &NetworkModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.dims.n as u32).to_le_bytes());
    buf.extend_from_slice(&(model.dims.ng as u32).to_le_bytes());
    for bn in [&model.bn1, &model.bn2] {
        buf.extend_from_slice(&bn.epsilon.to_le_bytes());
        buf.extend_from_slice(&bn.momentum.to_le_bytes());
    }
    push_f64s(&mut buf, &model.conv1.kernel);
    push_f64s(&mut buf, &model.conv1.bias);
    push_f64s(&mut buf, &model.bn1.gamma);
    push_f64s(&mut buf, &model.bn1.beta);
    push_f64s(&mut buf, &model.bn1.running_mean);
    push_f64s(&mut buf, &model.bn1.running_var);
    push_f64s(&mut buf, &model.conv2.kernel);
    push_f64s(&mut buf, &model.conv2.bias);
    push_f64s(&mut buf, &model.bn2.gamma);
    push_f64s(&mut buf, &model.bn2.beta);
    push_f64s(&mut buf, &model.bn2.running_mean);
    push_f64s(&mut buf, &model.bn2.running_var);
    push_f64s(&mut buf, &model.dense.weights);
    push_f64s(&mut buf, &model.dense.bias);
    buf
}

pub fn deserialize(bytes: &[u8]) -> Result<NetworkModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != MODEL_MAGIC {
        return Err(Error::Format("bad model magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: MODEL_VERSION });
    }
    let n = r.u32()? as usize;
    let ng = r.u32()? as usize;
    let dims = NetworkDims::new(n, ng)
        .map_err(|e| Error::Format(format!("model header carries invalid dimensions: {e}")))?;
    let mut model = NetworkModel::zeroed(dims);
    for bn in [&mut model.bn1, &mut model.bn2] {
        bn.epsilon = r.f64()?;
        bn.momentum = r.f64()?;
    }
    model.conv1.kernel = r.f64s(model.conv1.kernel.len())?;
    model.conv1.bias = r.f64s(model.conv1.bias.len())?;
    model.bn1.gamma = r.f64s(model.bn1.gamma.len())?;
    model.bn1.beta = r.f64s(model.bn1.beta.len())?;
    model.bn1.running_mean = r.f64s(model.bn1.running_mean.len())?;
    model.bn1.running_var = r.f64s(model.bn1.running_var.len())?;
    model.conv2.kernel = r.f64s(model.conv2.kernel.len())?;
    model.conv2.bias = r.f64s(model.conv2.bias.len())?;
    model.bn2.gamma = r.f64s(model.bn2.gamma.len())?;
    model.bn2.beta = r.f64s(model.bn2.beta.len())?;
    model.bn2.running_mean = r.f64s(model.bn2.running_mean.len())?;
    model.bn2.running_var = r.f64s(model.bn2.running_var.len())?;
    model.dense.weights = r.f64s(model.dense.weights.len())?;
    model.dense.bias = r.f64s(model.dense.bias.len())?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "model stream has {} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(model)
}

pub fn save_model(model: &NetworkModel, path: &Path) -> Result<()> {
    std::fs::write(path, serialize(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<NetworkModel> {
    let bytes = std::fs::read(path)?;
    deserialize(&bytes)
}
