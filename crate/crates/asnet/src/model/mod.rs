//! The policy network: a shared parameter store keyed by (layer, schema) and
//! (layer, predicate), the module-structured forward pass with max pooling
//! and a masked softmax output, exact reverse-mode gradients, Adam updates,
//! and a binary weights format that is bit-exact under round trips.

pub mod check;
pub mod net;

pub use net::{loss_and_grad, BatchItem, DropoutPlan, NetworkInstance};

use crate::ground::{domain_shape, DomainShape, FeatureMode, NetworkSpec};
use crate::ppddl::Domain;
use rand::Rng;
use std::collections::HashMap;
use std::io::{Read, Write};

pub const WEIGHTS_MAGIC: &[u8; 7] = b"ASNETW1";

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no enabled action: the forward pass requires at least one applicable action")]
    NoEnabledAction,
    #[error("weights format error: {0}")]
    Format(String),
    #[error("weights do not match the domain: {0}")]
    DomainMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shared-parameter key: action layers pair with schemas, proposition
/// layers with predicates. Keys order lexicographically by
/// (layer, kind, name), which is also the serialization order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeightKey {
    pub layer: u32,
    pub kind: KeyKind,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyKind {
    Pred,
    Schema,
}

/// One module parameter set: a `rows x cols` row-major matrix and a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Param {
        Param { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FingerprintEntry {
    pub name: String,
    pub arity: usize,
    /// Related-literal count M for schemas, slot count L for predicates.
    pub width: usize,
}

/// Domain identity a weights file is bound to: schema and predicate names,
/// arities and connectivity widths. Problem-independent by construction.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Fingerprint {
    pub schemas: Vec<FingerprintEntry>,
    pub preds: Vec<FingerprintEntry>,
}

impl Fingerprint {
    pub fn from_shape(shape: &DomainShape) -> Fingerprint {
        Fingerprint {
            schemas: shape
                .schemas
                .iter()
                .map(|s| FingerprintEntry {
                    name: s.name.clone(),
                    arity: s.arity,
                    width: s.related_count(),
                })
                .collect(),
            preds: shape
                .preds
                .iter()
                .map(|p| FingerprintEntry {
                    name: p.name.clone(),
                    arity: p.arity,
                    width: p.slot_count(),
                })
                .collect(),
        }
    }

    pub fn from_domain(domain: &Domain) -> Fingerprint {
        Fingerprint::from_shape(&domain_shape(domain))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Hyper {
    pub prop_layers: usize,
    pub hidden_dim: usize,
    pub mode: FeatureMode,
}

impl Hyper {
    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec { prop_layers: self.prop_layers, hidden_dim: self.hidden_dim, mode: self.mode }
    }
}

/// The learnt parameters. Module weights are stored once per key; every
/// ground module of the same schema or predicate at the same layer reads
/// the same entry, so an update through one module is visible to all.
#[derive(Debug, Clone)]
pub struct Weights {
    pub hyper: Hyper,
    pub fingerprint: Fingerprint,
    pub seed: u64,
    keys: Vec<WeightKey>,
    params: Vec<Param>,
    index: HashMap<WeightKey, usize>,
}

fn key_shapes(fingerprint: &Fingerprint, hyper: &Hyper) -> Vec<(WeightKey, usize, usize)> {
    let n = hyper.prop_layers;
    let dh = hyper.hidden_dim;
    let mut out = Vec::new();
    for layer in 1..=(n + 1) as u32 {
        for s in &fingerprint.schemas {
            let rows = if layer as usize == n + 1 { 1 } else { dh };
            let cols = if layer == 1 { hyper.mode.input_dim(s.width) } else { dh * s.width };
            out.push((WeightKey { layer, kind: KeyKind::Schema, name: s.name.clone() }, rows, cols));
        }
    }
    for layer in 1..=n as u32 {
        for p in &fingerprint.preds {
            out.push((WeightKey { layer, kind: KeyKind::Pred, name: p.name.clone() }, dh, dh * p.width));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

impl Weights {
    /// Glorot-uniform initialization: entries of each matrix drawn from
    /// U(-r, r) with r = sqrt(6 / (fan_in + fan_out)); biases zero.
    pub fn init(fingerprint: Fingerprint, hyper: Hyper, seed: u64) -> Weights {
        let shapes = key_shapes(&fingerprint, &hyper);
        let mut rng = crate::rng::stream(seed, &[0x1417]);
        let mut keys = Vec::with_capacity(shapes.len());
        let mut params = Vec::with_capacity(shapes.len());
        for (key, rows, cols) in shapes {
            let r = (6.0 / (rows + cols) as f64).sqrt();
            let w = (0..rows * cols).map(|_| rng.gen_range(-r..r)).collect();
            keys.push(key);
            params.push(Param { rows, cols, w, b: vec![0.0; rows] });
        }
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Weights { hyper, fingerprint, seed, keys, params, index }
    }

    pub fn zeros(fingerprint: Fingerprint, hyper: Hyper) -> Weights {
        let mut w = Weights::init(fingerprint, hyper, 0);
        for p in &mut w.params {
            p.w.iter_mut().for_each(|x| *x = 0.0);
        }
        w
    }

    pub fn key_count(&self) -> usize {
        self.keys.len()
    }

    pub fn keys(&self) -> &[WeightKey] {
        &self.keys
    }

    pub fn param(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn key_index(&self, layer: u32, kind: KeyKind, name: &str) -> usize {
        self.index[&WeightKey { layer, kind, name: name.to_string() }]
    }

    /// Gradient (or moment) storage with the same shapes as the parameters.
    pub fn zero_grads(&self) -> GradStore {
        GradStore {
            params: self.params.iter().map(|p| Param::zeros(p.rows, p.cols)).collect(),
        }
    }

    /// Squared L2 norm of all weight matrices (biases excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.params.iter().flat_map(|p| p.w.iter()).map(|w| w * w).sum()
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        out.write_all(WEIGHTS_MAGIC)?;
        let meta = serde_json::json!({
            "fingerprint": self.fingerprint,
            "prop_layers": self.hyper.prop_layers,
            "hidden_dim": self.hyper.hidden_dim,
            "mode": self.hyper.mode,
            "seed": self.seed,
        });
        let meta = serde_json::to_vec(&meta).expect("metadata serializes");
        out.write_all(&(meta.len() as u32).to_le_bytes())?;
        out.write_all(&meta)?;
        for p in &self.params {
            for &x in &p.w {
                out.write_all(&x.to_le_bytes())?;
            }
            for &x in &p.b {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn save_file(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let file = std::fs::File::create(path)?;
        self.save(std::io::BufWriter::new(file))
    }

    pub fn load<R: Read>(mut input: R, domain: &Domain) -> Result<Weights, ModelError> {
        let mut magic = [0u8; 7];
        input.read_exact(&mut magic).map_err(|_| ModelError::Format("truncated header".into()))?;
        if &magic != WEIGHTS_MAGIC {
            return Err(ModelError::Format("bad magic string".into()));
        }
        let mut len = [0u8; 4];
        input.read_exact(&mut len).map_err(|_| ModelError::Format("truncated header".into()))?;
        let mut meta = vec![0u8; u32::from_le_bytes(len) as usize];
        input.read_exact(&mut meta).map_err(|_| ModelError::Format("truncated metadata".into()))?;
        let meta: serde_json::Value = serde_json::from_slice(&meta)
            .map_err(|e| ModelError::Format(format!("metadata is not valid JSON: {e}")))?;
        let fingerprint: Fingerprint = serde_json::from_value(meta["fingerprint"].clone())
            .map_err(|e| ModelError::Format(format!("bad fingerprint block: {e}")))?;
        let hyper = Hyper {
            prop_layers: meta["prop_layers"]
                .as_u64()
                .ok_or_else(|| ModelError::Format("missing prop_layers".into()))?
                as usize,
            hidden_dim: meta["hidden_dim"]
                .as_u64()
                .ok_or_else(|| ModelError::Format("missing hidden_dim".into()))?
                as usize,
            mode: serde_json::from_value(meta["mode"].clone())
                .map_err(|e| ModelError::Format(format!("bad mode: {e}")))?,
        };
        let seed = meta["seed"].as_u64().unwrap_or(0);

        let expected = Fingerprint::from_domain(domain);
        if expected != fingerprint {
            return Err(ModelError::DomainMismatch(format!(
                "file was trained for a different domain shape (expected {} schemas / {} predicates with matching names and widths)",
                expected.schemas.len(),
                expected.preds.len()
            )));
        }

        let shapes = key_shapes(&fingerprint, &hyper);
        let mut keys = Vec::with_capacity(shapes.len());
        let mut params = Vec::with_capacity(shapes.len());
        let mut buf = [0u8; 8];
        for (key, rows, cols) in shapes {
            let mut p = Param::zeros(rows, cols);
            for x in p.w.iter_mut() {
                input.read_exact(&mut buf).map_err(|_| ModelError::Format("truncated tensor data".into()))?;
                *x = f64::from_le_bytes(buf);
            }
            for x in p.b.iter_mut() {
                input.read_exact(&mut buf).map_err(|_| ModelError::Format("truncated tensor data".into()))?;
                *x = f64::from_le_bytes(buf);
            }
            keys.push(key);
            params.push(p);
        }
        if input.read(&mut buf)? != 0 {
            return Err(ModelError::Format("trailing bytes after tensor data".into()));
        }
        let index = keys.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();
        Ok(Weights { hyper, fingerprint, seed, keys, params, index })
    }

    pub fn load_file(path: &std::path::Path, domain: &Domain) -> Result<Weights, ModelError> {
        let file = std::fs::File::open(path)?;
        Weights::load(std::io::BufReader::new(file), domain)
    }
}

impl PartialEq for Weights {
    fn eq(&self, other: &Self) -> bool {
        self.hyper == other.hyper
            && self.fingerprint == other.fingerprint
            && self.keys == other.keys
            && self.params == other.params
    }
}

#[derive(Debug, Clone)]
pub struct GradStore {
    pub params: Vec<Param>,
}

impl GradStore {
    pub fn add(&mut self, other: &GradStore) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.w.iter().chain(p.b.iter()))
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig { alpha: 5e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment estimates mirroring the parameter shapes.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub step: u64,
    m: Vec<Param>,
    v: Vec<Param>,
}

impl AdamState {
    pub fn new(weights: &Weights, cfg: AdamConfig) -> AdamState {
        let zero = || weights.params.iter().map(|p| Param::zeros(p.rows, p.cols)).collect();
        AdamState { cfg, step: 0, m: zero(), v: zero() }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(weights: &mut Weights, state: &mut AdamState, grads: &GradStore) {
    state.step += 1;
    let c = state.cfg;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    for (i, p) in weights.params.iter_mut().enumerate() {
        let g = &grads.params[i];
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        for k in 0..p.w.len() {
            m.w[k] = c.beta1 * m.w[k] + (1.0 - c.beta1) * g.w[k];
            v.w[k] = c.beta2 * v.w[k] + (1.0 - c.beta2) * g.w[k] * g.w[k];
            p.w[k] -= c.alpha * (m.w[k] / bc1) / ((v.w[k] / bc2).sqrt() + c.epsilon);
        }
        for k in 0..p.b.len() {
            m.b[k] = c.beta1 * m.b[k] + (1.0 - c.beta1) * g.b[k];
            v.b[k] = c.beta2 * v.b[k] + (1.0 - c.beta2) * g.b[k] * g.b[k];
            p.b[k] -= c.alpha * (m.b[k] / bc1) / ((v.b[k] / bc2).sqrt() + c.epsilon);
        }
    }
}

/// Softmax restricted to enabled entries: disabled entries are exactly zero
/// and the enabled ones sum to one. Errors when nothing is enabled.
pub fn masked_softmax(logits: &[f64], enabled: &[bool]) -> Result<Vec<f64>, ModelError> {
    let mut max = f64::NEG_INFINITY;
    for (i, &l) in logits.iter().enumerate() {
        if enabled[i] && l > max {
            max = l;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(ModelError::NoEnabledAction);
    }
    let mut out = vec![0.0; logits.len()];
    let mut total = 0.0;
    for i in 0..logits.len() {
        if enabled[i] {
            let e = (logits[i] - max).exp();
            out[i] = e;
            total += e;
        }
    }
    for x in out.iter_mut() {
        *x /= total;
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
