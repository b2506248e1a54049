//! Policy evaluation: repeated greedy executions of a trained network on
//! one problem, aggregated into coverage and cost statistics.

use crate::features::FeatureCache;
use crate::ground::GroundTask;
use crate::heur::determinize_relax;
use crate::model::{ModelError, NetworkInstance, Weights};
use crate::rng::{stream, tag};
use crate::ssp::{self, Outcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialResult {
    pub outcome: Outcome,
    pub cost: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub problem: String,
    pub trials: usize,
    /// Trials that reached the goal within the step limit.
    pub successes: usize,
    /// Mean cost over successful trials.
    pub mean_cost: Option<f64>,
    /// 1.96 * sd / sqrt(k) over successful-trial costs; needs k >= 2.
    pub ci_half_width: Option<f64>,
    pub outcomes: Vec<TrialResult>,
    pub seed: u64,
}

impl EvalReport {
    fn fmt_opt(x: Option<f64>) -> String {
        match x {
            Some(v) => format!("{:.2}", v),
            None => "-".to_string(),
        }
    }

    /// Tab-separated single-line form:
    /// problem, coverage `k/n`, mean cost, CI half-width, seed.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}/{}\t{}\t{}\t{}",
            self.problem,
            self.successes,
            self.trials,
            Self::fmt_opt(self.mean_cost),
            Self::fmt_opt(self.ci_half_width),
            self.seed
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "problem": self.problem,
            "trials": self.trials,
            "successes": self.successes,
            "coverage": format!("{}/{}", self.successes, self.trials),
            "mean_cost": self.mean_cost,
            "ci_half_width": self.ci_half_width,
            "seed": self.seed,
            "outcomes": self.outcomes.iter().map(|t| serde_json::json!({
                "outcome": match t.outcome {
                    Outcome::Goal => "goal",
                    Outcome::DeadEnd => "dead-end",
                    Outcome::LengthLimit => "length-limit",
                },
                "cost": t.cost,
                "steps": t.steps,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Greedy action under the network policy: highest probability, ties to the
/// lowest action index.
pub fn greedy_policy_action(pi: &[f64], enabled: &[bool]) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for (a, (&p, &e)) in pi.iter().zip(enabled).enumerate() {
        if e && best.map_or(true, |(bp, _)| p > bp) {
            best = Some((p, a as u32));
        }
    }
    best.map(|(_, a)| a)
}

/// Run `trials` greedy executions with per-trial derived seeds. Each trial's
/// stream depends on (seed, problem name, trial index) only, so reports are
/// reproducible bit-for-bit, confidence digits included.
pub fn evaluate(
    weights: &Weights,
    task: &GroundTask,
    trials: usize,
    seed: u64,
    step_limit: usize,
    mut trace: Option<&mut dyn std::io::Write>,
) -> Result<EvalReport, ModelError> {
    let mut instance = NetworkInstance::new(task, weights)?;
    let relaxed = determinize_relax(task);
    let mut cache = FeatureCache::new(weights.hyper.mode);
    let mut outcomes = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = stream(seed, &[tag("eval"), tag(&task.problem_name), t as u64]);
        let traj = ssp::run_policy(
            task,
            |s, _| {
                let feats = cache.get(task, &relaxed, s);
                let enabled = ssp::enabled_mask(task, s);
                let pi = instance
                    .forward(weights, &feats.data, &enabled, None)
                    .map_err(|e| e.to_string())?;
                greedy_policy_action(pi, &enabled)
                    .ok_or_else(|| "no enabled action".to_string())
            },
            &mut rng,
            step_limit,
        )
        .map_err(|e| ModelError::Format(format!("evaluation rollout failed: {e}")))?;
        if let Some(w) = trace.as_mut() {
            let _ = writeln!(w, "# trial {}", t);
            let _ = w.write_all(ssp::format_trace(task, &traj).as_bytes());
        }
        outcomes.push(TrialResult {
            outcome: traj.outcome,
            cost: traj.total_cost(),
            steps: traj.actions.len(),
        });
    }
    let costs: Vec<f64> = outcomes
        .iter()
        .filter(|t| t.outcome == Outcome::Goal)
        .map(|t| t.cost)
        .collect();
    let successes = costs.len();
    let mean_cost = if successes > 0 {
        Some(costs.iter().sum::<f64>() / successes as f64)
    } else {
        None
    };
    let ci_half_width = if successes >= 2 {
        let mean = mean_cost.unwrap();
        let var =
            costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (successes - 1) as f64;
        Some(1.96 * var.sqrt() / (successes as f64).sqrt())
    } else {
        None
    };
    Ok(EvalReport {
        problem: task.problem_name.clone(),
        trials,
        successes,
        mean_cost,
        ci_half_width,
        outcomes,
        seed,
    })
}
