//! Binary model checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! b"ICUM1"  u32 H
//! for each tensor: u32 rows, u32 cols, rows*cols f64 (row-major)
//! ```
//!
//! Tensor order: for layers 0, 1, 2 the triple `w_x` (4H×D), `w_h` (4H×H),
//! `b` (1×4H); then `head.w` (1×(H+S)) and `head.b` (1×1).

use std::path::Path;

use crate::error::{Error, Result};

use super::lstm::{LstmModel, N_LAYERS};
use super::matrix::Matrix;

pub const MAGIC: &[u8; 5] = b"ICUM1";

pub fn encode(model: &LstmModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.hidden as u32).to_le_bytes());
    let mut put = |rows: usize, cols: usize, data: &[f64]| {
        out.extend_from_slice(&(rows as u32).to_le_bytes());
        out.extend_from_slice(&(cols as u32).to_le_bytes());
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for layer in &model.layers {
        put(layer.w_x.rows(), layer.w_x.cols(), layer.w_x.as_slice());
        put(layer.w_h.rows(), layer.w_h.cols(), layer.w_h.as_slice());
        put(1, layer.b.len(), &layer.b);
    }
    put(1, model.head_w.len(), &model.head_w);
    put(1, 1, &[model.head_b]);
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn tensor(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let (r, c) = (self.u32()?, self.u32()?);
        if (r, c) != (rows, cols) {
            return Err(Error::Checkpoint(format!(
                "{name}: stored shape {r}x{c}, expected {rows}x{cols}"
            )));
        }
        let raw = self.take(8 * r * c)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!("{name}: non-finite value")));
        }
        Ok(data)
    }

    /// Reads just the shape header of the next tensor without consuming it.
    fn peek_shape(&self) -> Result<(usize, usize)> {
        let mut c = Cursor {
            bytes: self.bytes,
            pos: self.pos,
        };
        Ok((c.u32()?, c.u32()?))
    }
}

pub fn decode(bytes: &[u8]) -> Result<LstmModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::Checkpoint(
            "bad magic, not an ICUM1 checkpoint".into(),
        ));
    }
    let h = cur.u32()?;
    if h == 0 {
        return Err(Error::Checkpoint("hidden size 0".into()));
    }
    let (_, d) = cur.peek_shape()?;
    let mut layers = Vec::with_capacity(N_LAYERS);
    for l in 0..N_LAYERS {
        let input = if l == 0 { d } else { h };
        let w_x = cur.tensor(&format!("layer{l}.w_x"), 4 * h, input)?;
        let w_h = cur.tensor(&format!("layer{l}.w_h"), 4 * h, h)?;
        let b = cur.tensor(&format!("layer{l}.b"), 1, 4 * h)?;
        layers.push(super::lstm::LstmLayerParams {
            w_x: Matrix::from_vec(4 * h, input, w_x)?,
            w_h: Matrix::from_vec(4 * h, h, w_h)?,
            b,
        });
    }
    let (_, head_len) = cur.peek_shape()?;
    if head_len < h {
        return Err(Error::Checkpoint(format!(
            "head has {head_len} weights, fewer than H = {h}"
        )));
    }
    let head_w = cur.tensor("head.w", 1, head_len)?;
    let head_b = cur.tensor("head.b", 1, 1)?[0];
    if cur.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - cur.pos
        )));
    }
    Ok(LstmModel {
        hidden: h,
        input_size: d,
        static_size: head_len - h,
        layers,
        head_w,
        head_b,
    })
}

pub fn save(path: &Path, model: &LstmModel) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<LstmModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
