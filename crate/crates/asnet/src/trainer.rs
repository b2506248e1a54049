//! Interleaved exploration and supervised learning. Each epoch samples
//! trajectories from the current policy on every training problem, inserts
//! the visited states plus the teacher's greedy-policy envelopes into a
//! deduplicated state memory (labels computed once, at insertion), then
//! takes a fixed number of minibatch Adam steps on that memory. Training
//! stops at the wall-clock limit or when the exploration success rate stops
//! improving; the best-scoring weights snapshot is returned.

use crate::features::{FeatureCache, FeatureSet};
use crate::ground::{ground, FeatureMode, GroundError, GroundTask};
use crate::model::{
    adam_step, loss_and_grad, AdamConfig, AdamState, BatchItem, Fingerprint, Hyper, ModelError,
    NetworkInstance, Weights,
};
use crate::ppddl::{Domain, Problem};
use crate::rng::stream;
use crate::ssp::{self, State};
use crate::teacher::{HeuristicKind, Teacher};
use rand::Rng;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Ground(#[from] GroundError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("teacher could not label any state of any training problem")]
    TeacherBudgetExhausted,
    #[error("state memory is empty; run an exploration epoch first")]
    EmptyMemory,
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Exploration trajectories per epoch, shared equally over the problems.
    pub explore_total: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    /// Trajectory length cap, for both exploration and evaluation.
    pub step_limit: usize,
    /// Wall-clock budget in seconds, teacher time included.
    pub time_limit: f64,
    pub plateau_window: usize,
    pub plateau_threshold: f64,
    pub epsilon: f64,
    pub dead_end_penalty: f64,
    pub heuristic: HeuristicKind,
    pub mode: FeatureMode,
    pub prop_layers: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub dropout: f64,
    pub teacher_trial_cap: usize,
    /// Optional per-epoch cap on teacher envelope work, in seconds.
    pub teacher_budget_per_epoch: Option<f64>,
    pub max_epochs: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            explore_total: 25,
            batches_per_epoch: 300,
            batch_size: 128,
            step_limit: 300,
            time_limit: 7200.0,
            plateau_window: 10,
            plateau_threshold: 0.01,
            epsilon: 1e-4,
            dead_end_penalty: 500.0,
            heuristic: HeuristicKind::LmCut,
            mode: FeatureMode::LmCut,
            prop_layers: 2,
            hidden_dim: 16,
            learning_rate: 5e-4,
            l2: 1e-3,
            dropout: 0.25,
            teacher_trial_cap: 100_000,
            teacher_budget_per_epoch: None,
            max_epochs: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn hyper(&self) -> Hyper {
        Hyper { prop_layers: self.prop_layers, hidden_dim: self.hidden_dim, mode: self.mode }
    }

    pub fn explore_per_problem(&self, problems: usize) -> usize {
        self.explore_total.div_ceil(problems.max(1))
    }
}

/// One deduplicated labeled state.
pub struct LabeledState {
    pub state: State,
    pub enabled: Vec<bool>,
    pub labels: Vec<f64>,
    pub feats: Rc<FeatureSet>,
}

/// Per-problem memory: insertion-ordered, deduplicated; goal and dead-end
/// states are never stored and labels are frozen at insertion.
#[derive(Default)]
pub struct StateMemory {
    pub states: Vec<LabeledState>,
    index: HashMap<State, usize>,
}

impl StateMemory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn contains(&self, s: &State) -> bool {
        self.index.contains_key(s)
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub memory: usize,
    pub mean_loss: f64,
    pub success_rate: f64,
    pub elapsed: f64,
}

impl std::fmt::Display for EpochStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch {}, |M| {}, mean loss {:.4}, explore success rate {:.3}, elapsed {:.1}s",
            self.epoch, self.memory, self.mean_loss, self.success_rate, self.elapsed
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TimeLimit,
    Plateau,
    MaxEpochs,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stop: StopReason,
    pub best_success: f64,
    pub elapsed: f64,
    /// States the teacher failed to label within its budget.
    pub skipped_states: usize,
}

struct ProblemCtx<'a> {
    task: &'a GroundTask,
    teacher: Teacher<'a>,
    memory: StateMemory,
    cache: FeatureCache,
    instance: NetworkInstance<'a>,
    envelopes_expanded: HashSet<State>,
}

/// Incremental training state over a fixed set of ground tasks. Drives one
/// exploration or learning epoch at a time so callers control termination.
pub struct TrainSession<'a> {
    pub cfg: TrainConfig,
    ctxs: Vec<ProblemCtx<'a>>,
    pub weights: Weights,
    adam: AdamState,
    pub epoch: usize,
    pub skipped_states: usize,
    started: Instant,
}

impl<'a> TrainSession<'a> {
    pub fn new(domain: &Domain, tasks: &'a [GroundTask], cfg: TrainConfig) -> Result<TrainSession<'a>, TrainError> {
        let weights = Weights::init(Fingerprint::from_domain(domain), cfg.hyper(), cfg.seed);
        let adam = AdamState::new(
            &weights,
            AdamConfig { alpha: cfg.learning_rate, ..AdamConfig::default() },
        );
        let mut ctxs = Vec::with_capacity(tasks.len());
        for (pi, task) in tasks.iter().enumerate() {
            ctxs.push(ProblemCtx {
                task,
                teacher: Teacher::new(
                    task,
                    cfg.heuristic,
                    cfg.epsilon,
                    cfg.dead_end_penalty,
                    cfg.teacher_trial_cap,
                    stream(cfg.seed, &[0x7e, pi as u64]).gen(),
                ),
                memory: StateMemory::default(),
                cache: FeatureCache::new(cfg.mode),
                instance: NetworkInstance::new(task, &weights)?,
                envelopes_expanded: HashSet::new(),
            });
        }
        Ok(TrainSession { cfg, ctxs, weights, adam, epoch: 0, skipped_states: 0, started: Instant::now() })
    }

    pub fn memory_len(&self) -> usize {
        self.ctxs.iter().map(|c| c.memory.len()).sum()
    }

    pub fn memory_of(&self, problem: usize) -> &StateMemory {
        &self.ctxs[problem].memory
    }

    pub fn elapsed(&self) -> f64 {
        self.started.elapsed().as_secs_f64()
    }

    fn insert_labeled(
        ctx: &mut ProblemCtx<'a>,
        state: &State,
        mode_skipped: &mut usize,
    ) {
        if ctx.memory.contains(state)
            || ssp::is_goal(ctx.task, state)
            || ssp::is_dead_end(ctx.task, state)
        {
            return;
        }
        match ctx.teacher.labels(state) {
            Some(labels) => {
                let enabled = ssp::enabled_mask(ctx.task, state);
                let feats = ctx.cache.get(ctx.task, ctx.teacher.relaxed(), state);
                ctx.memory.index.insert(state.clone(), ctx.memory.states.len());
                ctx.memory.states.push(LabeledState {
                    state: state.clone(),
                    enabled,
                    labels,
                    feats,
                });
            }
            None => *mode_skipped += 1,
        }
    }

    /// Sample trajectories from the current policy on every problem, adding
    /// visited states and teacher envelopes to the memory. Returns the
    /// fraction of trajectories that reached the goal.
    pub fn explore_epoch(&mut self) -> Result<f64, TrainError> {
        self.epoch += 1;
        let cfg = self.cfg.clone();
        let per_problem = cfg.explore_per_problem(self.ctxs.len());
        let mut goals = 0usize;
        let mut total = 0usize;
        let epoch = self.epoch as u64;
        let deadline = self.started;
        for (pi, ctx) in self.ctxs.iter_mut().enumerate() {
            let task = ctx.task;
            let teacher_clock = Instant::now();
            for trial in 0..per_problem {
                if deadline.elapsed().as_secs_f64() >= cfg.time_limit {
                    break;
                }
                let mut rng =
                    stream(cfg.seed, &[0xe5, epoch, pi as u64, trial as u64]);
                let instance = &mut ctx.instance;
                let cache = &mut ctx.cache;
                let relaxed = ctx.teacher.relaxed();
                let weights = &self.weights;
                let traj = ssp::run_policy(
                    task,
                    |s, rng| {
                        let feats = cache.get(task, relaxed, s);
                        let enabled = ssp::enabled_mask(task, s);
                        let pi_dist = instance
                            .forward(weights, &feats.data, &enabled, None)
                            .map_err(|e| e.to_string())?;
                        // Sample an action from the policy distribution.
                        let u: f64 = rng.gen();
                        let mut cum = 0.0;
                        let mut chosen = None;
                        for (a, &p) in pi_dist.iter().enumerate() {
                            if p > 0.0 {
                                cum += p;
                                chosen = Some(a as u32);
                                if u < cum {
                                    break;
                                }
                            }
                        }
                        chosen.ok_or_else(|| "empty policy distribution".to_string())
                    },
                    &mut rng,
                    cfg.step_limit,
                )
                .map_err(|e| ModelError::Format(format!("exploration failed: {e}")))?;
                total += 1;
                if traj.outcome == ssp::Outcome::Goal {
                    goals += 1;
                }
                for s in &traj.states {
                    Self::insert_labeled(ctx, s, &mut self.skipped_states);
                }
                for s in &traj.states {
                    if ssp::is_goal(task, s) || ssp::is_dead_end(task, s) {
                        continue;
                    }
                    if let Some(budget) = cfg.teacher_budget_per_epoch {
                        if teacher_clock.elapsed().as_secs_f64() >= budget {
                            self.skipped_states += 1;
                            continue;
                        }
                    }
                    if !ctx.envelopes_expanded.insert(s.clone()) {
                        continue;
                    }
                    if let Some(envelope) = ctx.teacher.envelope(s) {
                        for e in &envelope {
                            Self::insert_labeled(ctx, e, &mut self.skipped_states);
                        }
                    } else {
                        self.skipped_states += 1;
                    }
                }
            }
        }
        Ok(if total == 0 { 0.0 } else { goals as f64 / total as f64 })
    }

    /// One supervised phase: `batches_per_epoch` minibatches sampled
    /// uniformly with replacement from the union of all memories, grouped by
    /// problem, gradients summed, one Adam step per minibatch. Returns the
    /// mean data+regularizer loss per sampled state.
    pub fn learn_epoch(&mut self) -> Result<f64, TrainError> {
        let total: usize = self.memory_len();
        if total == 0 {
            return Err(TrainError::EmptyMemory);
        }
        let cfg = self.cfg.clone();
        let epoch = self.epoch as u64;
        let mut loss_sum = 0.0;
        let mut sampled = 0usize;
        for it in 0..cfg.batches_per_epoch {
            let mut rng = stream(cfg.seed, &[0x1ea2, epoch, it as u64]);
            let mut picks: Vec<Vec<usize>> = vec![Vec::new(); self.ctxs.len()];
            for _ in 0..cfg.batch_size {
                let mut g = rng.gen_range(0..total);
                for (pi, ctx) in self.ctxs.iter().enumerate() {
                    if g < ctx.memory.len() {
                        picks[pi].push(g);
                        break;
                    }
                    g -= ctx.memory.len();
                }
            }
            let mut grads = self.weights.zero_grads();
            let mut first_group = true;
            for (pi, idxs) in picks.iter().enumerate() {
                if idxs.is_empty() {
                    continue;
                }
                let ctx = &mut self.ctxs[pi];
                let items: Vec<BatchItem> = idxs
                    .iter()
                    .map(|&i| {
                        let ls = &ctx.memory.states[i];
                        BatchItem { feats: &ls.feats.data, enabled: &ls.enabled, labels: &ls.labels }
                    })
                    .collect();
                // The L2 term belongs to the step, not the group; charge it once.
                let l2 = if first_group { cfg.l2 } else { 0.0 };
                first_group = false;
                let (loss, g) = loss_and_grad(
                    &mut ctx.instance,
                    &self.weights,
                    &items,
                    l2,
                    cfg.dropout,
                    &mut rng,
                )?;
                loss_sum += loss;
                grads.add(&g);
            }
            sampled += cfg.batch_size;
            adam_step(&mut self.weights, &mut self.adam, &grads);
        }
        Ok(loss_sum / sampled.max(1) as f64)
    }
}

/// Ground every problem, then alternate exploration and learning epochs
/// until the time limit, an optional epoch cap, or a success-rate plateau.
/// Returns the best weights snapshot by smoothed exploration success.
pub fn train(
    domain: &Domain,
    problems: &[(String, Problem)],
    cfg: TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Weights, TrainReport), TrainError> {
    let tasks: Vec<GroundTask> =
        problems.iter().map(|(_, p)| ground(domain, p)).collect::<Result<_, _>>()?;
    let mut session = TrainSession::new(domain, &tasks, cfg)?;
    let cfg = session.cfg.clone();

    let mut report = TrainReport {
        epochs: Vec::new(),
        stop: StopReason::TimeLimit,
        best_success: 0.0,
        elapsed: 0.0,
        skipped_states: 0,
    };
    let mut best = session.weights.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut plateau_best = f64::NEG_INFINITY;
    let mut plateau_count = 0usize;
    let mut rates: Vec<f64> = Vec::new();

    loop {
        if session.elapsed() >= cfg.time_limit {
            report.stop = StopReason::TimeLimit;
            break;
        }
        if let Some(cap) = cfg.max_epochs {
            if session.epoch >= cap {
                report.stop = StopReason::MaxEpochs;
                break;
            }
        }
        let success = session.explore_epoch()?;
        if session.memory_len() == 0 {
            return Err(TrainError::TeacherBudgetExhausted);
        }
        let mean_loss = session.learn_epoch()?;
        rates.push(success);
        let window = cfg.plateau_window.max(1);
        let tail = &rates[rates.len().saturating_sub(window)..];
        let smoothed = tail.iter().sum::<f64>() / tail.len() as f64;
        if smoothed >= best_metric {
            best_metric = smoothed;
            best = session.weights.clone();
        }
        if smoothed > plateau_best + cfg.plateau_threshold {
            plateau_best = smoothed;
            plateau_count = 0;
        } else {
            plateau_count += 1;
        }
        let stats = EpochStats {
            epoch: session.epoch,
            memory: session.memory_len(),
            mean_loss,
            success_rate: success,
            elapsed: session.elapsed(),
        };
        on_epoch(&stats);
        report.epochs.push(stats);
        if plateau_count >= window {
            report.stop = StopReason::Plateau;
            break;
        }
    }
    report.best_success = best_metric.max(0.0);
    report.elapsed = session.elapsed();
    report.skipped_states = session.skipped_states;
    Ok((best, report))
}
