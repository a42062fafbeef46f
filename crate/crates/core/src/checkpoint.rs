//! Versioned checkpoint files: magic "PCKPT1", model config, the named
//! parameter list, and optionally the optimizer state of the trainable
//! subset. All integers little-endian, payloads f32.

use std::fs;
use std::path::Path;

use crate::autodiff::{AdamHyper, Tensor};
use crate::error::{CoreError, Result};
use crate::model::{ModelConfig, ModelParams};

pub const CKPT_MAGIC: [u8; 6] = *b"PCKPT1";

/// Optimizer state keyed by parameter name, as stored in checkpoints.
#[derive(Clone, Debug)]
pub struct AdamSnapshot {
    pub hyper: AdamHyper,
    pub t: u64,
    /// `(param_name, first_moment, second_moment)`.
    pub entries: Vec<(String, Tensor<f32>, Tensor<f32>)>,
}

fn put_u32(out: &mut Vec<u8>, x: usize) {
    out.extend_from_slice(&(x as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor<f32>) {
    put_u32(out, t.rank());
    for &d in t.shape() {
        put_u32(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save(path: &Path, params: &ModelParams<f32>, adam: Option<&AdamSnapshot>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&CKPT_MAGIC);
    let config_json = serde_json::to_string(&params.config).expect("config serializes");
    put_str(&mut out, &config_json);
    let list = params.params();
    put_u32(&mut out, list.len());
    for p in list {
        put_str(&mut out, &p.name);
        put_tensor(&mut out, &p.value);
    }
    match adam {
        None => out.push(0),
        Some(snap) => {
            out.push(1);
            let hyper_json = serde_json::to_string(&snap.hyper).expect("hyper serializes");
            put_str(&mut out, &hyper_json);
            out.extend_from_slice(&snap.t.to_le_bytes());
            put_u32(&mut out, snap.entries.len());
            for (name, m, v) in &snap.entries {
                put_str(&mut out, name);
                put_tensor(&mut out, m);
                put_tensor(&mut out, v);
            }
        }
    }
    fs::write(path, out).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, message: &str) -> Result<T> {
        Err(CoreError::BadFile {
            path: self.path.to_path_buf(),
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return self.fail("unexpected end of file");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        let s = self.take(n)?;
        String::from_utf8(s.to_vec()).or_else(|_| self.fail("invalid utf-8"))
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.u32()?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()?);
        }
        let n: usize = shape.iter().product();
        let raw = self.take(n * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data)
    }
}

pub fn load(path: &Path) -> Result<(ModelParams<f32>, Option<AdamSnapshot>)> {
    let bytes = fs::read(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(6)? != CKPT_MAGIC {
        return r.fail("missing PCKPT1 magic");
    }
    let config: ModelConfig = serde_json::from_str(&r.str()?)
        .map_err(|e| CoreError::BadFile {
            path: path.to_path_buf(),
            message: format!("bad config block: {e}"),
        })?;
    let n = r.u32()?;
    let mut loaded = Vec::with_capacity(n);
    for _ in 0..n {
        let name = r.str()?;
        let tensor = r.tensor()?;
        loaded.push((name, tensor));
    }

    // Rebuild the structured parameter set and overwrite every value by name.
    let mut params = ModelParams::<f32>::init(config, 0);
    {
        let mut slots = params.params_mut();
        if slots.len() != loaded.len() {
            return Err(CoreError::BadFile {
                path: path.to_path_buf(),
                message: format!("expected {} parameters, found {}", slots.len(), loaded.len()),
            });
        }
        for (slot, (name, tensor)) in slots.iter_mut().zip(loaded) {
            if slot.name != name || slot.value.shape() != tensor.shape() {
                return Err(CoreError::BadFile {
                    path: path.to_path_buf(),
                    message: format!("parameter {name} does not match expected {}", slot.name),
                });
            }
            slot.value = tensor;
        }
    }

    let has_adam = r.take(1)?[0];
    let adam = if has_adam == 1 {
        let hyper: AdamHyper = serde_json::from_str(&r.str()?)
            .map_err(|e| CoreError::BadFile {
                path: path.to_path_buf(),
                message: format!("bad optimizer block: {e}"),
            })?;
        let t = r.u64()?;
        let n = r.u32()?;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.str()?;
            let m = r.tensor()?;
            let v = r.tensor()?;
            entries.push((name, m, v));
        }
        Some(AdamSnapshot { hyper, t, entries })
    } else {
        None
    };
    Ok((params, adam))
}
