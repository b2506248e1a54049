//! Optimal and near-optimal solving for training supervision: LRTDP with a
//! pluggable heuristic, a Gauss-Seidel value-iteration oracle, greedy policy
//! envelopes and Q-based action labels.
//!
//! Values follow the finite-penalty semantics: a dead end is worth the
//! penalty `D`, every Bellman backup is capped at `D`, so any state from
//! which the goal is unreachable converges to exactly `D`.

use crate::ground::GroundTask;
use crate::heur::{hadd, lmcut, RelaxedTask};
use crate::ssp::{self, State};

use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};

/// Backups per trial before the trial is abandoned, to keep dead-end or
/// plateau regions from producing unbounded trials.
const TRIAL_BACKUP_CAP: usize = 1000;
const VI_RESIDUAL: f64 = 1e-9;
const VI_MAX_SWEEPS: usize = 1_000_000;
/// Absolute slack when deciding which Q-values count as minimal for labels.
pub const LABEL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, thiserror::Error)]
pub enum TeacherError {
    #[error("reachable state space exceeds the enumeration bound {bound} states")]
    Capacity { bound: usize },
}

/// State-value map with convergence bookkeeping.
#[derive(Debug, Clone)]
pub struct ValueTable {
    pub values: HashMap<State, f64>,
    pub solved: HashSet<State>,
    pub dead_end_penalty: f64,
    pub epsilon: f64,
    /// Whether the most recent root solve converged within its trial budget.
    pub converged: bool,
}

impl ValueTable {
    pub fn new(epsilon: f64, dead_end_penalty: f64) -> ValueTable {
        ValueTable {
            values: HashMap::new(),
            solved: HashSet::new(),
            dead_end_penalty,
            epsilon,
            converged: false,
        }
    }

    pub fn value(&self, s: &State) -> f64 {
        self.values.get(s).copied().unwrap_or(0.0)
    }

    pub fn is_solved(&self, s: &State) -> bool {
        self.solved.contains(s)
    }
}

/// Look up a state's value, lazily classifying terminals and seeding
/// non-terminals from the heuristic (capped at the dead-end penalty).
fn init_value(
    task: &GroundTask,
    vt: &mut ValueTable,
    s: &State,
    h: &mut dyn FnMut(&State) -> f64,
) -> f64 {
    if let Some(&v) = vt.values.get(s) {
        return v;
    }
    let d = vt.dead_end_penalty;
    let v = if ssp::is_goal(task, s) {
        vt.solved.insert(s.clone());
        0.0
    } else if ssp::is_dead_end(task, s) {
        vt.solved.insert(s.clone());
        d
    } else {
        let hv = h(s);
        if hv.is_infinite() {
            // The goal is unreachable even in the relaxation, so the true
            // value is exactly the penalty under capped backups.
            vt.solved.insert(s.clone());
            d
        } else {
            hv.min(d)
        }
    };
    vt.values.insert(s.clone(), v);
    v
}

fn q_value(
    task: &GroundTask,
    vt: &mut ValueTable,
    s: &State,
    a: u32,
    h: &mut dyn FnMut(&State) -> f64,
) -> f64 {
    let act = &task.actions[a as usize];
    let mut q = act.cost;
    for (p, succ) in ssp::successors(task, s, a).expect("greedy action applicable") {
        q += p * init_value(task, vt, &succ, h);
    }
    q
}

/// Capped Bellman backup and the greedy action (ties to the lowest index).
fn greedy_backup(
    task: &GroundTask,
    vt: &mut ValueTable,
    s: &State,
    h: &mut dyn FnMut(&State) -> f64,
) -> (f64, Option<u32>) {
    let mut best: Option<(f64, u32)> = None;
    for a in 0..task.action_count() as u32 {
        if !ssp::action_applicable(task, s, a) {
            continue;
        }
        let q = q_value(task, vt, s, a, h);
        if best.map_or(true, |(bq, _)| q < bq) {
            best = Some((q, a));
        }
    }
    match best {
        Some((q, a)) => (q.min(vt.dead_end_penalty), Some(a)),
        None => (vt.dead_end_penalty, None),
    }
}

fn residual(
    task: &GroundTask,
    vt: &mut ValueTable,
    s: &State,
    h: &mut dyn FnMut(&State) -> f64,
) -> (f64, Option<u32>) {
    let v = init_value(task, vt, s, h);
    let (backup, a) = greedy_backup(task, vt, s, h);
    ((v - backup).abs(), a)
}

fn check_solved(
    task: &GroundTask,
    vt: &mut ValueTable,
    root: &State,
    h: &mut dyn FnMut(&State) -> f64,
) -> bool {
    let mut rv = true;
    let mut open: Vec<State> = Vec::new();
    let mut closed: Vec<State> = Vec::new();
    let mut seen: HashSet<State> = HashSet::new();
    init_value(task, vt, root, h);
    if !vt.is_solved(root) {
        seen.insert(root.clone());
        open.push(root.clone());
    }
    while let Some(s) = open.pop() {
        let (res, greedy) = residual(task, vt, &s, h);
        closed.push(s.clone());
        if res > vt.epsilon {
            rv = false;
            continue;
        }
        if let Some(a) = greedy {
            for (p, succ) in ssp::successors(task, &s, a).unwrap() {
                if p <= 0.0 {
                    continue;
                }
                init_value(task, vt, &succ, h);
                if !vt.is_solved(&succ) && !seen.contains(&succ) {
                    seen.insert(succ.clone());
                    open.push(succ);
                }
            }
        }
    }
    if rv {
        for s in closed {
            vt.solved.insert(s);
        }
    } else {
        while let Some(s) = closed.pop() {
            let (backup, _) = greedy_backup(task, vt, &s, h);
            vt.values.insert(s, backup);
        }
    }
    rv
}

/// Run labeled trials from `root` until it is solved or the trial budget is
/// spent. Returns whether the root converged; the table accumulates values
/// monotonically and can be reused across roots.
pub fn lrtdp_run(
    task: &GroundTask,
    vt: &mut ValueTable,
    root: &State,
    h: &mut dyn FnMut(&State) -> f64,
    trial_cap: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    init_value(task, vt, root, h);
    let mut trials = 0;
    while !vt.is_solved(root) && trials < trial_cap {
        trials += 1;
        let mut visited: Vec<State> = Vec::new();
        let mut s = root.clone();
        loop {
            init_value(task, vt, &s, h);
            if vt.is_solved(&s) || visited.len() >= TRIAL_BACKUP_CAP {
                break;
            }
            visited.push(s.clone());
            let (backup, greedy) = greedy_backup(task, vt, &s, h);
            vt.values.insert(s.clone(), backup);
            let a = greedy.expect("non-terminal state has a greedy action");
            let (succ, _) = ssp::sample_transition(task, &s, a, rng).unwrap();
            s = succ;
        }
        while let Some(s) = visited.pop() {
            if !check_solved(task, vt, &s, h) {
                break;
            }
        }
    }
    vt.is_solved(root)
}

/// LRTDP from a single root with a fresh table.
pub fn lrtdp_solve(
    task: &GroundTask,
    root: &State,
    h: &mut dyn FnMut(&State) -> f64,
    epsilon: f64,
    dead_end_penalty: f64,
    trial_cap: usize,
) -> ValueTable {
    let mut vt = ValueTable::new(epsilon, dead_end_penalty);
    let mut rng = crate::rng::stream(root.content_hash(), &[0x17d7]);
    vt.converged = lrtdp_run(task, &mut vt, root, h, trial_cap, &mut rng);
    vt
}

/// Exact Gauss-Seidel value iteration over the state space reachable from
/// the initial state. Test oracle for the trial-based solver.
pub fn value_iteration(
    task: &GroundTask,
    epsilon: f64,
    dead_end_penalty: f64,
    state_cap: usize,
) -> Result<ValueTable, TeacherError> {
    let mut order: Vec<State> = vec![task.s0.clone()];
    let mut seen: HashSet<State> = order.iter().cloned().collect();
    let mut i = 0;
    while i < order.len() {
        let s = order[i].clone();
        i += 1;
        if ssp::is_goal(task, &s) {
            continue;
        }
        for a in 0..task.action_count() as u32 {
            if !ssp::action_applicable(task, &s, a) {
                continue;
            }
            for (p, succ) in ssp::successors(task, &s, a).unwrap() {
                if p > 0.0 && !seen.contains(&succ) {
                    if order.len() >= state_cap {
                        return Err(TeacherError::Capacity { bound: state_cap });
                    }
                    seen.insert(succ.clone());
                    order.push(succ);
                }
            }
        }
    }

    let mut vt = ValueTable::new(epsilon, dead_end_penalty);
    for s in &order {
        let v = if ssp::is_goal(task, s) {
            0.0
        } else if ssp::is_dead_end(task, s) {
            dead_end_penalty
        } else {
            0.0
        };
        vt.values.insert(s.clone(), v);
    }
    for _ in 0..VI_MAX_SWEEPS {
        let mut max_delta = 0.0f64;
        for s in &order {
            if ssp::is_goal(task, s) || ssp::is_dead_end(task, s) {
                continue;
            }
            let old = vt.values[s];
            let mut best = f64::INFINITY;
            for a in 0..task.action_count() as u32 {
                if ssp::action_applicable(task, s, a) {
                    best = best.min(q_value_ref(task, &vt, s, a));
                }
            }
            let backup = best.min(dead_end_penalty);
            vt.values.insert(s.clone(), backup);
            max_delta = max_delta.max((backup - old).abs());
        }
        if max_delta < VI_RESIDUAL {
            break;
        }
    }
    for s in order {
        vt.solved.insert(s);
    }
    vt.converged = true;
    Ok(vt)
}

/// Read-only value lookup: stored value, else terminal classification, else
/// the zero lower bound for states the table has never touched.
fn lookup_value(task: &GroundTask, vt: &ValueTable, s: &State) -> f64 {
    if let Some(&v) = vt.values.get(s) {
        return v;
    }
    if ssp::is_goal(task, s) {
        0.0
    } else if ssp::is_dead_end(task, s) {
        vt.dead_end_penalty
    } else {
        0.0
    }
}

/// Q-value of an applicable action under a frozen table.
pub fn q_value_ref(task: &GroundTask, vt: &ValueTable, s: &State, a: u32) -> f64 {
    let act = &task.actions[a as usize];
    let mut q = act.cost;
    for (p, succ) in ssp::successors(task, s, a).expect("action applicable") {
        q += p * lookup_value(task, vt, &succ);
    }
    q
}

/// Greedy action under a frozen table, ties to the lowest action index.
pub fn greedy_action(task: &GroundTask, vt: &ValueTable, s: &State) -> Option<u32> {
    let mut best: Option<(f64, u32)> = None;
    for a in 0..task.action_count() as u32 {
        if !ssp::action_applicable(task, s, a) {
            continue;
        }
        let q = q_value_ref(task, vt, s, a);
        if best.map_or(true, |(bq, _)| q < bq) {
            best = Some((q, a));
        }
    }
    best.map(|(_, a)| a)
}

/// All states the greedy policy of `vt` can reach from `s` with positive
/// probability, in breadth-first order; goal and dead-end states are
/// included as leaves.
pub fn policy_envelope(task: &GroundTask, vt: &ValueTable, s: &State) -> Vec<State> {
    let mut out: Vec<State> = vec![s.clone()];
    let mut seen: HashSet<State> = out.iter().cloned().collect();
    let mut i = 0;
    while i < out.len() {
        let s = out[i].clone();
        i += 1;
        if ssp::is_goal(task, &s) || ssp::is_dead_end(task, &s) {
            continue;
        }
        if let Some(a) = greedy_action(task, vt, &s) {
            for (p, succ) in ssp::successors(task, &s, a).unwrap() {
                if p > 0.0 && !seen.contains(&succ) {
                    seen.insert(succ.clone());
                    out.push(succ);
                }
            }
        }
    }
    out
}

/// Per-action labels at `s`: 1.0 exactly for enabled actions whose Q-value
/// is minimal (within [`LABEL_TOLERANCE`]), 0.0 everywhere else.
pub fn q_labels(task: &GroundTask, vt: &ValueTable, s: &State) -> Vec<f64> {
    let mut qs: Vec<Option<f64>> = vec![None; task.action_count()];
    let mut min_q = f64::INFINITY;
    for a in 0..task.action_count() as u32 {
        if !ssp::action_applicable(task, s, a) {
            continue;
        }
        let q = q_value_ref(task, vt, s, a);
        min_q = min_q.min(q);
        qs[a as usize] = Some(q);
    }
    qs.into_iter()
        .map(|q| match q {
            Some(q) if q <= min_q + LABEL_TOLERANCE => 1.0,
            _ => 0.0,
        })
        .collect()
}

/// Which heuristic guides the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HeuristicKind {
    LmCut,
    HAdd,
}

impl HeuristicKind {
    pub fn parse(s: &str) -> Option<HeuristicKind> {
        match s {
            "lmcut" => Some(HeuristicKind::LmCut),
            "hadd" => Some(HeuristicKind::HAdd),
            _ => None,
        }
    }

    pub fn evaluate(self, rt: &RelaxedTask, s: &State) -> f64 {
        match self {
            HeuristicKind::LmCut => lmcut(rt, s).hvalue,
            HeuristicKind::HAdd => hadd(rt, s),
        }
    }
}

impl std::fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HeuristicKind::LmCut => write!(f, "lmcut"),
            HeuristicKind::HAdd => write!(f, "hadd"),
        }
    }
}

/// Stateful teacher for one problem: a shared value table accumulated over
/// every root it is asked about (monotone for LRTDP, so reuse is sound).
pub struct Teacher<'a> {
    task: &'a GroundTask,
    relaxed: RelaxedTask,
    kind: HeuristicKind,
    pub vt: ValueTable,
    trial_cap: usize,
    rng: ChaCha8Rng,
    /// Roots that failed to converge within the trial budget.
    pub unconverged_roots: usize,
}

impl<'a> Teacher<'a> {
    pub fn new(
        task: &'a GroundTask,
        kind: HeuristicKind,
        epsilon: f64,
        dead_end_penalty: f64,
        trial_cap: usize,
        seed: u64,
    ) -> Teacher<'a> {
        Teacher {
            task,
            relaxed: crate::heur::determinize_relax(task),
            kind,
            vt: ValueTable::new(epsilon, dead_end_penalty),
            trial_cap,
            rng: crate::rng::stream(seed, &[0x7eac]),
            unconverged_roots: 0,
        }
    }

    pub fn relaxed(&self) -> &RelaxedTask {
        &self.relaxed
    }

    pub fn ensure_solved(&mut self, s: &State) -> bool {
        if self.vt.is_solved(s) {
            return true;
        }
        let kind = self.kind;
        let relaxed = &self.relaxed;
        let mut h = |s: &State| kind.evaluate(relaxed, s);
        let ok = lrtdp_run(self.task, &mut self.vt, s, &mut h, self.trial_cap, &mut self.rng);
        self.vt.converged = ok;
        if !ok {
            self.unconverged_roots += 1;
        }
        ok
    }

    pub fn value(&mut self, s: &State) -> f64 {
        self.ensure_solved(s);
        self.vt.value(s)
    }

    /// Greedy policy envelope rooted at `s` (solving from `s` first).
    pub fn envelope(&mut self, s: &State) -> Option<Vec<State>> {
        if !self.ensure_solved(s) {
            return None;
        }
        Some(policy_envelope(self.task, &self.vt, s))
    }

    /// Label vector at `s`, or None when the teacher cannot converge there.
    /// Solves from every one-step successor so non-greedy Q-values are exact
    /// rather than heuristic lower bounds.
    pub fn labels(&mut self, s: &State) -> Option<Vec<f64>> {
        if ssp::is_goal(self.task, s) || ssp::is_dead_end(self.task, s) {
            return None;
        }
        if !self.ensure_solved(s) {
            return None;
        }
        for a in 0..self.task.action_count() as u32 {
            if !ssp::action_applicable(self.task, s, a) {
                continue;
            }
            for (p, succ) in ssp::successors(self.task, s, a).unwrap() {
                if p > 0.0 && !self.ensure_solved(&succ) {
                    return None;
                }
            }
        }
        Some(q_labels(self.task, &self.vt, s))
    }
}
