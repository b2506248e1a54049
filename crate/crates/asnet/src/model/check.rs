//! Numeric diagnostics: central finite differences against the analytic
//! gradients. Used by the test suites and the `selftest` command; kept
//! independent of the backward pass it verifies.

use super::net::BatchItem;
use super::{loss_and_grad, NetworkInstance, Weights};
use crate::features::FeatureSet;
use crate::ground::GroundTask;

pub struct CheckItem {
    pub feats: FeatureSet,
    pub enabled: Vec<bool>,
    pub labels: Vec<f64>,
}

/// Maximum relative error between analytic gradients and central finite
/// differences (step 1e-4) over every parameter coordinate, dropout off.
/// Near-zero coordinate pairs are compared absolutely at 1e-7.
pub fn finite_difference_max_rel_err(
    task: &GroundTask,
    weights: &Weights,
    batch: &[CheckItem],
    l2: f64,
) -> f64 {
    let items: Vec<BatchItem> = batch
        .iter()
        .map(|it| BatchItem { feats: &it.feats.data, enabled: &it.enabled, labels: &it.labels })
        .collect();
    let mut rng = crate::rng::stream(0, &[]);
    let mut net = NetworkInstance::new(task, weights).expect("weights fit the task");
    let (_, grads) = loss_and_grad(&mut net, weights, &items, l2, 0.0, &mut rng).unwrap();

    let loss_at = |w: &Weights| -> f64 {
        let mut net = NetworkInstance::new(task, w).unwrap();
        let mut rng = crate::rng::stream(0, &[]);
        loss_and_grad(&mut net, w, &items, l2, 0.0, &mut rng).unwrap().0
    };
    let h = 1e-4;
    let mut max_rel: f64 = 0.0;
    for idx in 0..weights.params().len() {
        let coords = weights.params()[idx].w.len() + weights.params()[idx].b.len();
        for c in 0..coords {
            let write = |w: &mut Weights, v: f64| {
                let p = &mut w.params_mut()[idx];
                if c < p.w.len() {
                    p.w[c] = v;
                } else {
                    let k = c - p.w.len();
                    p.b[k] = v;
                }
            };
            let orig = {
                let p = &weights.params()[idx];
                if c < p.w.len() {
                    p.w[c]
                } else {
                    p.b[c - p.w.len()]
                }
            };
            let mut plus = weights.clone();
            write(&mut plus, orig + h);
            let mut minus = weights.clone();
            write(&mut minus, orig - h);
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            let analytic = {
                let p = &grads.params[idx];
                if c < p.w.len() {
                    p.w[c]
                } else {
                    p.b[c - p.w.len()]
                }
            };
            let scale = numeric.abs().max(analytic.abs());
            if scale > 1e-6 {
                max_rel = max_rel.max((numeric - analytic).abs() / scale);
            } else if (numeric - analytic).abs() >= 1e-7 {
                return f64::INFINITY;
            }
        }
    }
    max_rel
}
