//! Named parameter store, optimizer step and the on-disk parameter container.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic   "SPLATLOC-PARAMS\n"   16 bytes
//! version u32                    currently 1
//! len     u64                    byte length of the JSON index
//! index   JSON                   {"adam_step": n, "meta": {..}, "tensors": {name: {shape, dtype, offset}}}
//! payload raw little-endian element buffers, offsets relative to payload start
//! ```
//!
//! Optimizer moments are stored as extra entries named `adam.m/<name>` and
//! `adam.v/<name>`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AdamConfig, AdamState, Tensor};
use crate::scalar::Real;

const MAGIC: &[u8; 16] = b"SPLATLOC-PARAMS\n";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ParamsError {
    #[error("duplicate parameter name {0}")]
    Duplicate(String),
    #[error("unknown parameter {0}")]
    Unknown(String),
    #[error("parameter {0} has no gradient; run backward first")]
    MissingGrad(String),
    #[error("parameter {name}: expected shape {expected:?}, file has {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("not a parameter container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    adam_step: u64,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    tensors: BTreeMap<String, IndexEntry>,
}

/// All learnable weights of a model, keyed by dotted name, plus Adam state.
pub struct ModelParams<T: Real> {
    tensors: BTreeMap<String, Tensor<T>>,
    pub adam: AdamState<T>,
    /// Free-form string metadata stored in the container index.
    pub meta: BTreeMap<String, String>,
}

impl<T: Real> Default for ModelParams<T> {
    fn default() -> Self {
        Self {
            tensors: BTreeMap::new(),
            adam: AdamState::default(),
            meta: BTreeMap::new(),
        }
    }
}

impl<T: Real> ModelParams<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], data: Vec<T>) -> Result<Tensor<T>, ParamsError> {
        if self.tensors.contains_key(name) {
            return Err(ParamsError::Duplicate(name.to_string()));
        }
        let t = Tensor::param(shape, data);
        self.tensors.insert(name.to_string(), t.clone());
        Ok(t)
    }

    /// Inserts a weight drawn from `N(0, std^2)`.
    pub fn insert_normal(
        &mut self,
        name: &str,
        shape: &[usize],
        std: f64,
        rng: &mut impl Rng,
    ) -> Result<Tensor<T>, ParamsError> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
        self.insert(name, shape, data)
    }

    pub fn insert_fill(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor<T>, ParamsError> {
        let n: usize = shape.iter().product();
        self.insert(name, shape, vec![T::lit(value); n])
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>, ParamsError> {
        self.tensors.get(name).ok_or_else(|| ParamsError::Unknown(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_weights(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    pub fn zero_grad(&self) {
        self.tensors.values().for_each(Tensor::zero_grad);
    }

    /// Zeroes every gradient, then back-propagates `loss`. Parameters not
    /// reachable from the loss end with zero gradients.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<(), super::TensorError> {
        self.zero_grad();
        loss.backward()
    }

    /// One bias-corrected Adam update over every parameter; clears gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<(), ParamsError> {
        for (name, t) in &self.tensors {
            if t.grad().is_none() {
                return Err(ParamsError::MissingGrad(name.clone()));
            }
        }
        self.adam.step += 1;
        let step = self.adam.step as i32;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let bc1 = T::one() - b1.powi(step);
        let bc2 = T::one() - b2.powi(step);
        let lr = T::lit(cfg.lr);
        let eps = T::lit(cfg.eps);
        for (name, t) in &self.tensors {
            let g = t.grad().expect("checked above");
            let m = self.adam.first.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
            let v = self.adam.second.entry(name.clone()).or_insert_with(|| vec![T::zero(); g.len()]);
            t.update_data(|w| {
                for i in 0..w.len() {
                    m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                    v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                    let mh = m[i] / bc1;
                    let vh = v[i] / bc2;
                    w[i] -= lr * mh / (vh.sqrt() + eps);
                }
            });
            t.clear_grad();
        }
        Ok(())
    }

    /// Deep copy of weights and optimizer state into a fresh store.
    pub fn snapshot(&self) -> Self {
        let tensors = self
            .tensors
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::param(t.shape(), t.to_vec())))
            .collect();
        Self {
            tensors,
            adam: self.adam.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut index = Index {
            adam_step: self.adam.step,
            meta: self.meta.clone(),
            tensors: BTreeMap::new(),
        };
        let mut payload = Vec::new();
        let mut push = |name: String, shape: &[usize], data: &[T], payload: &mut Vec<u8>| {
            index.tensors.insert(
                name,
                IndexEntry {
                    shape: shape.to_vec(),
                    dtype: T::DTYPE.to_string(),
                    offset: payload.len() as u64,
                },
            );
            data.iter().for_each(|v| v.write_le(payload));
        };
        for (name, t) in &self.tensors {
            push(name.clone(), t.shape(), &t.data(), &mut payload);
            if let Some(m) = self.adam.first.get(name) {
                push(format!("adam.m/{name}"), t.shape(), m, &mut payload);
            }
            if let Some(v) = self.adam.second.get(name) {
                push(format!("adam.v/{name}"), t.shape(), v, &mut payload);
            }
        }
        let json = serde_json::to_vec(&index).expect("index serializes");
        let mut out = Vec::with_capacity(32 + json.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        out
    }

    /// Parses a container. Elements stored at another precision are converted.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ParamsError> {
        let fmt = |m: &str| ParamsError::Format(m.to_string());
        if bytes.len() < 28 || &bytes[..16] != MAGIC {
            return Err(fmt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if version != VERSION {
            return Err(ParamsError::Format(format!("unsupported version {version}")));
        }
        let len = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
        let json = bytes.get(28..28 + len).ok_or_else(|| fmt("truncated index"))?;
        let index: Index = serde_json::from_slice(json).map_err(|e| ParamsError::Format(e.to_string()))?;
        let payload = &bytes[28 + len..];
        let mut out = Self::new();
        out.adam.step = index.adam_step;
        out.meta = index.meta.clone();
        for (name, e) in &index.tensors {
            let n: usize = e.shape.iter().product();
            let data: Vec<T> = match e.dtype.as_str() {
                "f32" => read_slice::<f32>(payload, e.offset, n)?.into_iter().map(|v| T::lit(v as f64)).collect(),
                "f64" => read_slice::<f64>(payload, e.offset, n)?.into_iter().map(T::lit).collect(),
                other => return Err(ParamsError::Format(format!("unknown dtype {other}"))),
            };
            if let Some(base) = name.strip_prefix("adam.m/") {
                out.adam.first.insert(base.to_string(), data);
            } else if let Some(base) = name.strip_prefix("adam.v/") {
                out.adam.second.insert(base.to_string(), data);
            } else {
                out.insert(name, &e.shape, data)?;
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParamsError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ParamsError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    /// Copies weights (and optimizer state) from `other`, which must hold the
    /// same names and shapes.
    pub fn load_from(&mut self, other: &ModelParams<T>) -> Result<(), ParamsError> {
        for (name, t) in &self.tensors {
            let src = other.get(name)?;
            if src.shape() != t.shape() {
                return Err(ParamsError::ShapeMismatch {
                    name: name.clone(),
                    expected: t.shape().to_vec(),
                    found: src.shape().to_vec(),
                });
            }
            t.set_data(src.to_vec());
        }
        if let Some(extra) = other.names().find(|n| !self.contains(n)) {
            return Err(ParamsError::Unknown(extra.to_string()));
        }
        self.adam = other.adam.clone();
        Ok(())
    }
}

fn read_slice<E: Real>(payload: &[u8], offset: u64, n: usize) -> Result<Vec<f64>, ParamsError> {
    let start = offset as usize;
    let end = start + n * E::BYTES;
    let bytes = payload
        .get(start..end)
        .ok_or_else(|| ParamsError::Format("truncated payload".into()))?;
    Ok(bytes.chunks(E::BYTES).map(|c| E::read_le(c).as_f64()).collect())
}
