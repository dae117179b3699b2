//! Versioned binary weight container.
//!
//! Layout (little endian): magic `PSYNCWTS`, `u32` format version, `u32`
//! length plus UTF-8 JSON of the model configuration, then two tensor
//! groups (parameters, buffers), each a `u32` count followed by tensors
//! written as `u16` name length, name, `u8` rank, `u32` extents and `f64`
//! values.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};

use super::{Crnn, ModelConfig, ParamSet, Tensor};
use crate::error::{Error, Result};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PSYNCWTS";

/// Contents of a weight file.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    pub version: u32,
    pub config: ModelConfig,
    pub params: ParamSet,
    pub buffers: ParamSet,
}

impl WeightStore {
    pub fn from_model(model: &Crnn) -> Self {
        WeightStore {
            version: WEIGHT_FORMAT_VERSION,
            config: model.config().clone(),
            params: model.params().clone(),
            buffers: model.buffers().clone(),
        }
    }

    /// Builds the model. With `expected` given, tensor shapes are checked
    /// against that configuration first and the stored configuration must
    /// then equal it.
    pub fn into_model(self, expected: Option<&ModelConfig>) -> Result<Crnn> {
        if let Some(cfg) = expected {
            Crnn::from_parts(cfg.clone(), self.params.clone(), self.buffers.clone())?;
            if *cfg != self.config {
                return Err(Error::WeightLoad {
                    field: "config".into(),
                    message: "stored model configuration differs from the requested one".into(),
                });
            }
        }
        Crnn::from_parts(self.config, self.params, self.buffers)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        let cfg = serde_json::to_vec(&self.config)?;
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(&cfg);
        for group in [&self.params, &self.buffers] {
            out.extend_from_slice(&(group.len() as u32).to_le_bytes());
            for t in group.tensors() {
                let name = t.name.as_bytes();
                out.extend_from_slice(&(name.len() as u16).to_le_bytes());
                out.extend_from_slice(name);
                out.push(t.value.ndim() as u8);
                for &d in t.value.shape() {
                    out.extend_from_slice(&(d as u32).to_le_bytes());
                }
                for v in t.value.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(load_err("magic", "not a weight file"));
        }
        let version = r.u32("version")?;
        if version != WEIGHT_FORMAT_VERSION {
            return Err(Error::WeightVersion {
                found: version,
                expected: WEIGHT_FORMAT_VERSION,
            });
        }
        let len = r.u32("config length")? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(len, "config")?)
            .map_err(|e| load_err("config", &e.to_string()))?;
        let params = r.group("parameters")?;
        let buffers = r.group("buffers")?;
        if r.pos != bytes.len() {
            return Err(load_err(
                "trailer",
                "unexpected bytes after the last tensor",
            ));
        }
        Ok(WeightStore {
            version,
            config,
            params,
            buffers,
        })
    }
}

fn load_err(field: &str, message: &str) -> Error {
    Error::WeightLoad {
        field: field.to_string(),
        message: message.to_string(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| load_err(field, "file truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, field)?.try_into().expect("4 bytes"),
        ))
    }

    fn group(&mut self, what: &str) -> Result<ParamSet> {
        let count = self.u32(&format!("{what} count"))?;
        let mut set = ParamSet::new();
        for k in 0..count {
            let field = format!("{what}[{k}]");
            let len =
                u16::from_le_bytes(self.take(2, &field)?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(self.take(len, &field)?)
                .map_err(|_| load_err(&field, "tensor name is not UTF-8"))?
                .to_string();
            let rank = self.take(1, &name)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u32(&name)? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = self.take(
                n.checked_mul(8)
                    .ok_or_else(|| load_err(&name, "tensor too large"))?,
                &name,
            )?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let value = ArrayD::from_shape_vec(IxDyn(&shape), values)
                .map_err(|e| load_err(&name, &e.to_string()))?;
            set.tensors_push(Tensor { name, value });
        }
        Ok(set)
    }
}

pub fn save_weights(model: &Crnn, path: &Path) -> Result<()> {
    let bytes = WeightStore::from_model(model).to_bytes()?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<WeightStore> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    WeightStore::from_bytes(&bytes)
}
