//! Forward pass and exact reverse-mode gradients for the module network.
//!
//! One action module per ground action per action layer, one proposition
//! module per ground proposition per proposition layer. Modules of the same
//! schema or predicate at the same layer share one parameter entry; the
//! backward pass accumulates their gradients into that entry.

use super::{masked_softmax, Fingerprint, GradStore, KeyKind, ModelError, Param, Weights};
use crate::ground::{GroundTask, NetworkSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const LOG_CLAMP: f64 = 1e-12;

#[inline]
fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

/// ELU derivative recovered from the activation value (alpha = 1).
#[inline]
fn elu_deriv_from_output(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        u + 1.0
    }
}

fn affine(p: &Param, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), p.cols);
    for r in 0..p.rows {
        let row = &p.w[r * p.cols..(r + 1) * p.cols];
        let mut acc = p.b[r];
        for (w, xv) in row.iter().zip(x) {
            acc += w * xv;
        }
        out[r] = acc;
    }
}

fn add_outer(gw: &mut [f64], dz: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &mut gw[r * cols..(r + 1) * cols];
        for (g, xv) in row.iter_mut().zip(x) {
            *g += d * xv;
        }
    }
}

fn add_mat_t_vec(w: &[f64], dz: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (r, &d) in dz.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (acc, wv) in dx.iter_mut().zip(row) {
            *acc += d * wv;
        }
    }
}

/// Dropout request for a training-mode forward pass.
pub struct DropoutPlan<'a> {
    pub p: f64,
    pub rng: &'a mut ChaCha8Rng,
}

/// Activation buffers and wiring for one ground task. Not shareable across
/// concurrent callers; create one per thread.
pub struct NetworkInstance<'t> {
    pub task: &'t GroundTask,
    pub spec: NetworkSpec,
    /// Parameter index per (action layer, schema) and (prop layer, predicate).
    act_key: Vec<Vec<usize>>,
    prop_key: Vec<Vec<usize>>,
    feat_off: Vec<usize>,
    feat_len: usize,
    act_in_off: Vec<usize>,
    prop_in_off: Vec<usize>,
    prop_in_len: usize,
    // Forward state kept for the backward pass.
    feats: Vec<f64>,
    enabled: Vec<bool>,
    act_out: Vec<Vec<f64>>,
    act_in: Vec<Vec<f64>>,
    prop_out: Vec<Vec<f64>>,
    prop_in: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
    drop_act: Vec<Vec<f64>>,
    drop_prop: Vec<Vec<f64>>,
    policy: Vec<f64>,
    // Backward scratch.
    d_act_out: Vec<Vec<f64>>,
    d_prop_out: Vec<Vec<f64>>,
    d_prop_in: Vec<f64>,
    scratch_dz: Vec<f64>,
    scratch_dx: Vec<f64>,
}

impl<'t> NetworkInstance<'t> {
    pub fn new(task: &'t GroundTask, weights: &Weights) -> Result<NetworkInstance<'t>, ModelError> {
        let expected = Fingerprint::from_shape(&task.shape);
        if expected != weights.fingerprint {
            return Err(ModelError::DomainMismatch(
                "weights were built for a different domain shape".into(),
            ));
        }
        let spec = weights.hyper.spec();
        let n = spec.prop_layers;
        let dh = spec.hidden_dim;
        let na = task.action_count();
        let np = task.prop_count();

        let act_key: Vec<Vec<usize>> = (1..=(n + 1) as u32)
            .map(|layer| {
                task.shape
                    .schemas
                    .iter()
                    .map(|s| weights.key_index(layer, KeyKind::Schema, &s.name))
                    .collect()
            })
            .collect();
        let prop_key: Vec<Vec<usize>> = (1..=n as u32)
            .map(|layer| {
                task.shape
                    .preds
                    .iter()
                    .map(|p| weights.key_index(layer, KeyKind::Pred, &p.name))
                    .collect()
            })
            .collect();

        let mut feat_off = Vec::with_capacity(na);
        let mut feat_len = 0;
        let mut act_in_off = Vec::with_capacity(na);
        let mut act_in_len = 0;
        for a in &task.actions {
            feat_off.push(feat_len);
            feat_len += spec.mode.input_dim(task.shape.schemas[a.schema].related_count());
            act_in_off.push(act_in_len);
            act_in_len += dh * task.shape.schemas[a.schema].related_count();
        }
        let mut prop_in_off = Vec::with_capacity(np);
        let mut prop_in_len = 0;
        for p in &task.props {
            prop_in_off.push(prop_in_len);
            prop_in_len += dh * task.shape.preds[p.pred].slot_count();
        }

        let act_out: Vec<Vec<f64>> =
            (0..=n).map(|al| vec![0.0; na * if al == n { 1 } else { dh }]).collect();
        Ok(NetworkInstance {
            task,
            spec,
            act_key,
            prop_key,
            feat_off,
            feat_len,
            act_in_off,
            prop_in_off,
            prop_in_len,
            feats: vec![0.0; feat_len],
            enabled: vec![false; na],
            d_act_out: act_out.clone(),
            act_out,
            act_in: (0..n).map(|_| vec![0.0; act_in_len]).collect(),
            prop_out: (0..n).map(|_| vec![0.0; np * dh]).collect(),
            d_prop_out: (0..n).map(|_| vec![0.0; np * dh]).collect(),
            prop_in: (0..n).map(|_| vec![0.0; prop_in_len]).collect(),
            argmax: (0..n).map(|_| vec![u32::MAX; prop_in_len]).collect(),
            drop_act: (0..n).map(|_| vec![1.0; na * dh]).collect(),
            drop_prop: (0..n).map(|_| vec![1.0; np * dh]).collect(),
            policy: vec![0.0; na],
            d_prop_in: vec![0.0; prop_in_len],
            scratch_dz: vec![0.0; dh.max(1)],
            scratch_dx: vec![0.0; feat_len.max(act_in_len).max(prop_in_len).max(1)],
        })
    }

    pub fn feature_len(&self) -> usize {
        self.feat_len
    }

    pub fn feature_offsets(&self) -> &[usize] {
        &self.feat_off
    }

    pub fn policy(&self) -> &[f64] {
        &self.policy
    }

    fn fill_dropout(mask: &mut [f64], p: f64, rng: &mut ChaCha8Rng) {
        let keep = 1.0 - p;
        for m in mask.iter_mut() {
            *m = if rng.gen_bool(keep) { 1.0 / keep } else { 0.0 };
        }
    }

    /// Compute the action distribution for one state. `feats` is the packed
    /// first-layer feature vector (see [`crate::features`]), `enabled` the
    /// applicability mask. Training mode applies inverted dropout to every
    /// hidden layer's outputs; evaluation is deterministic.
    pub fn forward(
        &mut self,
        weights: &Weights,
        feats: &[f64],
        enabled: &[bool],
        mut dropout: Option<DropoutPlan<'_>>,
    ) -> Result<&[f64], ModelError> {
        assert_eq!(feats.len(), self.feat_len, "feature vector length mismatch");
        let n = self.spec.prop_layers;
        let dh = self.spec.hidden_dim;
        let na = self.task.action_count();
        self.feats.copy_from_slice(feats);
        self.enabled.copy_from_slice(enabled);

        if let Some(plan) = dropout.as_mut() {
            if plan.p > 0.0 {
                for al in 0..n {
                    Self::fill_dropout(&mut self.drop_act[al], plan.p, plan.rng);
                }
                for pl in 0..n {
                    Self::fill_dropout(&mut self.drop_prop[pl], plan.p, plan.rng);
                }
            }
        }
        let training = dropout.as_ref().map_or(false, |p| p.p > 0.0);
        if !training {
            for m in self.drop_act.iter_mut().chain(self.drop_prop.iter_mut()) {
                m.iter_mut().for_each(|x| *x = 1.0);
            }
        }

        // First action layer reads the feature vector.
        let out_w = if n == 0 { 1 } else { dh };
        for (a, action) in self.task.actions.iter().enumerate() {
            let p = &weights.params()[self.act_key[0][action.schema]];
            let x = &self.feats[self.feat_off[a]..self.feat_off[a] + p.cols];
            let out = &mut self.act_out[0][a * out_w..(a + 1) * out_w];
            affine(p, x, out);
            if n > 0 {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = elu(*o) * self.drop_act[0][a * dh + k];
                }
            }
        }

        for pl in 0..n {
            // Proposition layer pl+1: max-pool the previous action layer
            // into per-schema slots, then one affine + ELU per proposition.
            self.argmax[pl].iter_mut().for_each(|x| *x = u32::MAX);
            for (pi, prop) in self.task.props.iter().enumerate() {
                let base = self.prop_in_off[pi];
                let slots = &self.task.contributors[pi];
                for (k, slot) in slots.iter().enumerate() {
                    let dst = base + k * dh;
                    if slot.is_empty() {
                        self.prop_in[pl][dst..dst + dh].fill(0.0);
                        continue;
                    }
                    for d in 0..dh {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_a = u32::MAX;
                        for &a in slot {
                            let v = self.act_out[pl][a as usize * dh + d];
                            if v > best {
                                best = v;
                                best_a = a;
                            }
                        }
                        self.prop_in[pl][dst + d] = best;
                        self.argmax[pl][dst + d] = best_a;
                    }
                }
                let p = &weights.params()[self.prop_key[pl][prop.pred]];
                let x = &self.prop_in[pl][base..base + p.cols];
                let out = &mut self.prop_out[pl][pi * dh..(pi + 1) * dh];
                affine(p, x, out);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = elu(*o) * self.drop_prop[pl][pi * dh + k];
                }
            }

            // Action layer pl+2: gather related proposition representations.
            let al = pl + 1;
            let is_output = al == n;
            let out_w = if is_output { 1 } else { dh };
            for (a, action) in self.task.actions.iter().enumerate() {
                let base = self.act_in_off[a];
                for (j, &rp) in action.rel.iter().enumerate() {
                    let src = rp as usize * dh;
                    self.act_in[pl][base + j * dh..base + (j + 1) * dh]
                        .copy_from_slice(&self.prop_out[pl][src..src + dh]);
                }
                let p = &weights.params()[self.act_key[al][action.schema]];
                let x = &self.act_in[pl][base..base + p.cols];
                let dst = a * out_w;
                let out = &mut self.act_out[al][dst..dst + out_w];
                affine(p, x, out);
                if !is_output {
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = elu(*o) * self.drop_act[al][a * dh + k];
                    }
                }
            }
        }

        let logits = &self.act_out[n];
        debug_assert_eq!(logits.len(), na);
        self.policy = masked_softmax(logits, &self.enabled)?;
        Ok(&self.policy)
    }

    /// Cross-entropy data loss of the last forward pass against `labels`,
    /// accumulating exact gradients for every shared parameter into `grads`.
    /// Sums over enabled actions only; logs are clamped at 1e-12.
    pub fn backward(&mut self, weights: &Weights, labels: &[f64], grads: &mut GradStore) -> f64 {
        let n = self.spec.prop_layers;
        let dh = self.spec.hidden_dim;
        let na = self.task.action_count();
        debug_assert_eq!(labels.len(), na);

        let mut loss = 0.0;
        let mut dpi = vec![0.0; na];
        for a in 0..na {
            if !self.enabled[a] {
                continue;
            }
            let pi = self.policy[a];
            let y = labels[a];
            let p_clamped = pi.max(LOG_CLAMP);
            let q_clamped = (1.0 - pi).max(LOG_CLAMP);
            loss -= y * p_clamped.ln() + (1.0 - y) * q_clamped.ln();
            let dp = if pi > LOG_CLAMP { y / p_clamped } else { 0.0 };
            let dq = if 1.0 - pi > LOG_CLAMP { (1.0 - y) / q_clamped } else { 0.0 };
            dpi[a] = -(dp - dq);
        }
        // Masked softmax Jacobian: dL/dz_b = pi_b (dL/dpi_b - sum_a dL/dpi_a pi_a).
        let dot: f64 =
            (0..na).filter(|&a| self.enabled[a]).map(|a| dpi[a] * self.policy[a]).sum();
        for buf in self.d_act_out.iter_mut().chain(self.d_prop_out.iter_mut()) {
            buf.iter_mut().for_each(|x| *x = 0.0);
        }
        for a in 0..na {
            self.d_act_out[n][a] = if self.enabled[a] { self.policy[a] * (dpi[a] - dot) } else { 0.0 };
        }

        // Walk the layers backwards: output action layer, then alternating
        // proposition / action layers down to the feature layer.
        for al in (0..=n).rev() {
            let is_output = al == n;
            let out_w = if is_output { 1 } else { dh };
            for (a, action) in self.task.actions.iter().enumerate() {
                let pidx = self.act_key[al][action.schema];
                let p = &weights.params()[pidx];
                let dz = &mut self.scratch_dz[..out_w];
                let mut all_zero = true;
                for k in 0..out_w {
                    let mut d = self.d_act_out[al][a * out_w + k];
                    if !is_output && d != 0.0 {
                        let mask = self.drop_act[al][a * dh + k];
                        if mask == 0.0 {
                            d = 0.0;
                        } else {
                            let u = self.act_out[al][a * out_w + k] / mask;
                            d *= mask * elu_deriv_from_output(u);
                        }
                    }
                    dz[k] = d;
                    all_zero &= d == 0.0;
                }
                if all_zero {
                    continue;
                }
                let g = &mut grads.params[pidx];
                let x: &[f64] = if al == 0 {
                    &self.feats[self.feat_off[a]..self.feat_off[a] + p.cols]
                } else {
                    let base = self.act_in_off[a];
                    &self.act_in[al - 1][base..base + p.cols]
                };
                add_outer(&mut g.w, dz, x);
                for (gb, d) in g.b.iter_mut().zip(dz.iter()) {
                    *gb += d;
                }
                if al > 0 {
                    let dx = &mut self.scratch_dx[..p.cols];
                    dx.fill(0.0);
                    add_mat_t_vec(&p.w, dz, dx);
                    for (j, &rp) in action.rel.iter().enumerate() {
                        let dst = rp as usize * dh;
                        for k in 0..dh {
                            self.d_prop_out[al - 1][dst + k] += dx[j * dh + k];
                        }
                    }
                }
            }

            if al == 0 {
                break;
            }
            let pl = al - 1;
            self.d_prop_in.fill(0.0);
            for (pi, prop) in self.task.props.iter().enumerate() {
                let pidx = self.prop_key[pl][prop.pred];
                let p = &weights.params()[pidx];
                let dz = &mut self.scratch_dz[..dh];
                let mut all_zero = true;
                for k in 0..dh {
                    let mut d = self.d_prop_out[pl][pi * dh + k];
                    if d != 0.0 {
                        let mask = self.drop_prop[pl][pi * dh + k];
                        if mask == 0.0 {
                            d = 0.0;
                        } else {
                            let u = self.prop_out[pl][pi * dh + k] / mask;
                            d *= mask * elu_deriv_from_output(u);
                        }
                    }
                    dz[k] = d;
                    all_zero &= d == 0.0;
                }
                if all_zero {
                    continue;
                }
                let g = &mut grads.params[pidx];
                let base = self.prop_in_off[pi];
                let x = &self.prop_in[pl][base..base + p.cols];
                add_outer(&mut g.w, dz, x);
                for (gb, d) in g.b.iter_mut().zip(dz.iter()) {
                    *gb += d;
                }
                let dx = &mut self.d_prop_in[base..base + p.cols];
                add_mat_t_vec(&p.w, dz, dx);
            }
            // Max pooling routes each element's gradient to the recorded
            // argmax contributor (the lowest index on exact ties).
            for e in 0..self.prop_in_len {
                let a = self.argmax[pl][e];
                if a == u32::MAX {
                    continue;
                }
                let d = self.d_prop_in[e];
                if d == 0.0 {
                    continue;
                }
                // Element e sits at dimension (e - slot start) % dh of its slot.
                let k = e % dh;
                self.d_act_out[pl][a as usize * dh + k] += d;
            }
        }
        loss
    }
}

/// One labeled training example, borrowed from the state memory.
pub struct BatchItem<'a> {
    pub feats: &'a [f64],
    pub enabled: &'a [bool],
    pub labels: &'a [f64],
}

/// Summed cross-entropy loss and exact gradients over a batch, plus an
/// optional L2 penalty on the weight matrices (`l2 > 0` adds
/// `l2 * sum(W^2)` to the loss and `2*l2*W` to the gradients; biases are
/// not penalized). Dropout with probability `p > 0` uses fresh masks per
/// example.
pub fn loss_and_grad(
    instance: &mut NetworkInstance<'_>,
    weights: &Weights,
    batch: &[BatchItem<'_>],
    l2: f64,
    dropout_p: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, GradStore), ModelError> {
    let mut grads = weights.zero_grads();
    let mut loss = 0.0;
    for item in batch {
        let plan = if dropout_p > 0.0 { Some(DropoutPlan { p: dropout_p, rng: &mut *rng }) } else { None };
        instance.forward(weights, item.feats, item.enabled, plan)?;
        loss += instance.backward(weights, item.labels, &mut grads);
    }
    if l2 > 0.0 {
        loss += l2 * weights.weight_sq_norm();
        for (g, p) in grads.params.iter_mut().zip(weights.params()) {
            for (gw, w) in g.w.iter_mut().zip(&p.w) {
                *gw += 2.0 * l2 * w;
            }
        }
    }
    Ok((loss, grads))
}
