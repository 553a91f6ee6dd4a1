//! Binary model checkpoint.
//!
//! Layout (all integers `u32` little-endian, all reals `f64` little-endian):
//!
//! ```text
//! "TRIBEKIT" version in_dim layer_count
//! per layer: tag u8 (0 dense, 1 relu, 2 norm)
//!   dense: out in weights[out·in] bias[out]
//!   norm:  channels scale[c] shift[c] mean[c] var[c]
//! ```

use std::path::Path;

use super::model::SourceModel;
use super::network::{DenseLayer, Layer, Network};
use super::Tensor;
use crate::error::{Error, Result};
use crate::norm::{Affine, ChannelStats};

pub const MAGIC: &[u8; 8] = b"TRIBEKIT";
pub const FORMAT_VERSION: u32 = 1;

const TAG_DENSE: u8 = 0;
const TAG_RELU: u8 = 1;
const TAG_NORM: u8 = 2;

pub fn encode(model: &SourceModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, model.net.in_dim() as u32);
    put_u32(&mut out, model.net.layers().len() as u32);
    let mut slot = 0;
    for layer in model.net.layers() {
        match layer {
            Layer::Dense(d) => {
                out.push(TAG_DENSE);
                put_u32(&mut out, d.out_dim() as u32);
                put_u32(&mut out, d.in_dim() as u32);
                put_f64s(&mut out, d.weights.data());
                put_f64s(&mut out, &d.bias);
            }
            Layer::Relu => out.push(TAG_RELU),
            Layer::Norm(a) => {
                out.push(TAG_NORM);
                put_u32(&mut out, a.channels() as u32);
                put_f64s(&mut out, &a.scale);
                put_f64s(&mut out, &a.shift);
                put_f64s(&mut out, &model.stats[slot].mean);
                put_f64s(&mut out, &model.stats[slot].var);
                slot += 1;
            }
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> std::result::Result<SourceModel, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let in_dim = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    let mut stats = Vec::new();
    for _ in 0..n_layers {
        match r.take(1)?[0] {
            TAG_DENSE => {
                let out = r.u32()? as usize;
                let inp = r.u32()? as usize;
                let w = r.f64s(out * inp)?;
                let b = r.f64s(out)?;
                let weights = Tensor::matrix(out, inp, w).map_err(|e| e.to_string())?;
                layers.push(Layer::Dense(DenseLayer::new(weights, b).map_err(|e| e.to_string())?));
            }
            TAG_RELU => layers.push(Layer::Relu),
            TAG_NORM => {
                let c = r.u32()? as usize;
                let scale = r.f64s(c)?;
                let shift = r.f64s(c)?;
                let mean = r.f64s(c)?;
                let var = r.f64s(c)?;
                layers.push(Layer::Norm(Affine { scale, shift }));
                stats.push(ChannelStats { mean, var });
            }
            t => return Err(format!("unknown layer tag {t}")),
        }
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let net = Network::new(in_dim, layers).map_err(|e| e.to_string())?;
    SourceModel::new(net, stats).map_err(|e| e.to_string())
}

pub fn save(model: &SourceModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<SourceModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|msg| Error::format(path, msg))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated checkpoint")?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let raw = self.take(n.checked_mul(8).ok_or("size overflow")?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}
