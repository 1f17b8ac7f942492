//! Binary checkpoint container.
//!
//! ```text
//! "HATCK001"
//! u32 len, meta text ("key=value\n" lines, sorted by key)
//! u32 count
//! per tensor: u32 len, name, u32 rank, rank x u64 extents, raw LE values
//! u64 FNV-1a over every preceding byte
//! ```
//! All integers are little-endian. The `dtype` meta key (`f32` or `f64`)
//! fixes the width of the raw values.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use hat_tensor::{Element, Tensor};

use crate::error::{Error, Result};
use crate::model::{HatModel, ModelConfig};

pub const MAGIC: &[u8; 8] = b"HATCK001";
const MODEL_PREFIX: &str = "model.";
/// Tensor-name prefix of optimizer state.
pub const OPTIM_PREFIX: &str = "optim.";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T: Element> {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor<T>>,
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).map_err(|_| bad("text block is not UTF-8"))
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| bad(format!("length {v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

/// Parses the meta block without decoding tensors or checking the checksum.
pub fn read_meta(bytes: &[u8]) -> Result<BTreeMap<String, String>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let n = r.u32()?;
    parse_meta(r.text(n)?)
}

fn parse_meta(text: &str) -> Result<BTreeMap<String, String>> {
    text.lines()
        .map(|line| {
            line.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| bad(format!("meta line `{line}` is not key=value")))
        })
        .collect()
}

impl<T: Element> Checkpoint<T> {
    pub fn new() -> Self {
        Self { meta: BTreeMap::new(), tensors: BTreeMap::new() }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut meta = self.meta.clone();
        meta.insert("dtype".into(), T::DTYPE.into());
        let mut text = String::new();
        for (k, v) in &meta {
            if k.contains('=') || k.contains('\n') || v.contains('\n') {
                return Err(bad(format!("meta entry `{k}` cannot be written as a single key=value line")));
            }
            text.push_str(&format!("{k}={v}\n"));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, text.len())?;
        out.extend_from_slice(text.as_bytes());
        put_u32(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.rank())?;
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        let sum = checksum(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(bad("file too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        if checksum(body) != stored {
            return Err(bad("checksum mismatch"));
        }
        let n = r.u32()?;
        let mut meta = parse_meta(r.text(n)?)?;
        match meta.remove("dtype") {
            Some(d) if d == T::DTYPE => {}
            Some(d) => return Err(bad(format!("checkpoint holds {d} values, expected {}", T::DTYPE))),
            None => return Err(bad("missing dtype")),
        }
        let count = r.u32()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()?;
            let name = r.text(len)?.to_string();
            let rank = r.u32()?;
            let shape = (0..rank).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &e| a.checked_mul(e))
                .ok_or_else(|| bad(format!("tensor `{name}` extents overflow")))?;
            let raw = r.take(numel.checked_mul(T::BYTES).ok_or_else(|| bad("tensor too large"))?)?;
            let data = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
            if tensors.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
                return Err(bad(format!("duplicate tensor `{name}`")));
            }
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes before checksum"));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.encode()?;
        // write-then-rename keeps the previous file intact on failure
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Like [`Checkpoint::load`] but converts values stored at the other
    /// precision.
    pub fn load_cast(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        match read_meta(&bytes)?.get("dtype").map(String::as_str) {
            Some(d) if d == T::DTYPE => Self::decode(&bytes),
            Some("f32") => Ok(Checkpoint::<f32>::decode(&bytes)?.cast()),
            Some("f64") => Ok(Checkpoint::<f64>::decode(&bytes)?.cast()),
            Some(d) => Err(bad(format!("unsupported dtype `{d}`"))),
            None => Err(bad("missing dtype")),
        }
    }

    pub fn cast<U: Element>(&self) -> Checkpoint<U> {
        Checkpoint {
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Stores the model config under `model.*` and its parameters by path.
    pub fn put_model(&mut self, model: &HatModel<T>) {
        for (k, v) in model.config().to_kv() {
            self.meta.insert(format!("{MODEL_PREFIX}{k}"), v);
        }
        for (path, t) in model.params().iter() {
            self.tensors.insert(path.clone(), t.clone());
        }
    }

    pub fn from_model(model: &HatModel<T>) -> Self {
        let mut ck = Self::new();
        ck.put_model(model);
        ck
    }

    pub fn config(&self) -> Result<ModelConfig> {
        let kv = self
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(MODEL_PREFIX).map(|k| (k.to_string(), v.clone())))
            .collect();
        ModelConfig::from_kv(&kv)
    }

    /// Rebuilds the stored model.
    pub fn model(&self) -> Result<HatModel<T>> {
        self.model_with(&self.config()?)
    }

    /// Loads the stored parameters into `config`, failing on the first path
    /// whose presence or shape disagrees.
    pub fn model_with(&self, config: &ModelConfig) -> Result<HatModel<T>> {
        let mut params = crate::model::ParamStore::new();
        for (name, t) in &self.tensors {
            if !name.starts_with(OPTIM_PREFIX) {
                params.insert(name.clone(), t.clone());
            }
        }
        HatModel::from_parts(config.clone(), params)
    }

    /// Tensors stored under `optim.<group>.`, keyed by the remaining path.
    pub fn optim_group(&self, group: &str) -> BTreeMap<String, Tensor<T>> {
        let prefix = format!("{OPTIM_PREFIX}{group}.");
        self.tensors.iter().filter_map(|(k, v)| k.strip_prefix(&prefix).map(|p| (p.to_string(), v.clone()))).collect()
    }

    pub fn put_optim_group(&mut self, group: &str, tensors: &BTreeMap<String, Tensor<T>>) {
        for (k, v) in tensors {
            self.tensors.insert(format!("{OPTIM_PREFIX}{group}.{k}"), v.clone());
        }
    }
}

impl<T: Element> Default for Checkpoint<T> {
    fn default() -> Self {
        Self::new()
    }
}
