//! Factored stochastic-shortest-path semantics over a ground task: state
//! representation, applicability, successor distributions, sampling and
//! trajectory execution.

use crate::ground::GroundTask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A full assignment to the task's propositions, packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct State {
    words: Box<[u64]>,
    nbits: u32,
}

impl State {
    pub fn zeroed(nbits: usize) -> State {
        State { words: vec![0u64; nbits.div_ceil(64)].into_boxed_slice(), nbits: nbits as u32 }
    }

    pub fn from_indices(nbits: usize, trues: &[u32]) -> State {
        let mut s = State::zeroed(nbits);
        for &i in trues {
            s.set(i, true);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.nbits as usize
    }

    pub fn is_empty(&self) -> bool {
        self.nbits == 0
    }

    #[inline]
    pub fn get(&self, i: u32) -> bool {
        debug_assert!(i < self.nbits);
        self.words[(i / 64) as usize] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: u32, v: bool) {
        debug_assert!(i < self.nbits);
        let w = &mut self.words[(i / 64) as usize];
        if v {
            *w |= 1 << (i % 64);
        } else {
            *w &= !(1 << (i % 64));
        }
    }

    pub fn ones(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.nbits).filter(|&i| self.get(i))
    }

    /// Stable 64-bit content hash, used for trajectory traces.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &w in self.words.iter() {
            h ^= w;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^ u64::from(self.nbits)
    }
}

impl std::fmt::Debug for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "State[{:016x}]", self.content_hash())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("action {action} is not applicable in the current state")]
    NotApplicable { action: u32 },
    #[error("policy error at step {step}: {msg}")]
    Policy { step: usize, msg: String },
}

/// Why a trajectory stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Goal,
    DeadEnd,
    LengthLimit,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<u32>,
    pub costs: Vec<f64>,
    pub outcome: Outcome,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }
}

#[inline]
pub fn action_applicable(task: &GroundTask, state: &State, action: u32) -> bool {
    task.actions[action as usize].pre.iter().all(|&p| state.get(p))
}

/// Indices of all actions whose precondition holds in `state`, ascending.
pub fn applicable(task: &GroundTask, state: &State) -> Vec<u32> {
    (0..task.actions.len() as u32).filter(|&a| action_applicable(task, state, a)).collect()
}

pub fn enabled_mask(task: &GroundTask, state: &State) -> Vec<bool> {
    (0..task.actions.len() as u32).map(|a| action_applicable(task, state, a)).collect()
}

pub fn is_goal(task: &GroundTask, state: &State) -> bool {
    task.goal.iter().all(|&p| state.get(p))
}

/// Syntactic dead end: not a goal and no applicable action. A goal state
/// with no applicable actions is a goal, not a dead end.
pub fn is_dead_end(task: &GroundTask, state: &State) -> bool {
    !is_goal(task, state)
        && !(0..task.actions.len() as u32).any(|a| action_applicable(task, state, a))
}

/// Apply one effect: deletes first, then adds (adds win on overlap).
pub fn apply_effect(task: &GroundTask, state: &State, action: u32, effect: usize) -> State {
    let eff = &task.actions[action as usize].effects[effect];
    let mut next = state.clone();
    for &p in &eff.del {
        next.set(p, false);
    }
    for &p in &eff.add {
        next.set(p, true);
    }
    next
}

/// Successor distribution of `action` in `state`; outcomes that produce the
/// same state are merged by summing their probabilities.
pub fn successors(
    task: &GroundTask,
    state: &State,
    action: u32,
) -> Result<Vec<(f64, State)>, SimError> {
    if !action_applicable(task, state, action) {
        return Err(SimError::NotApplicable { action });
    }
    let act = &task.actions[action as usize];
    let mut out: Vec<(f64, State)> = Vec::with_capacity(act.effects.len());
    for e in 0..act.effects.len() {
        let next = apply_effect(task, state, action, e);
        match out.iter_mut().find(|(_, s)| *s == next) {
            Some((p, _)) => *p += act.effects[e].prob,
            None => out.push((act.effects[e].prob, next)),
        }
    }
    Ok(out)
}

/// Sample one transition; returns the successor and the action cost.
pub fn sample_transition(
    task: &GroundTask,
    state: &State,
    action: u32,
    rng: &mut ChaCha8Rng,
) -> Result<(State, f64), SimError> {
    if !action_applicable(task, state, action) {
        return Err(SimError::NotApplicable { action });
    }
    let act = &task.actions[action as usize];
    let effect = if act.effects.len() == 1 {
        0
    } else {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut chosen = act.effects.len() - 1;
        for (e, eff) in act.effects.iter().enumerate() {
            cum += eff.prob;
            if u < cum {
                chosen = e;
                break;
            }
        }
        chosen
    };
    Ok((apply_effect(task, state, action, effect), act.cost))
}

/// Run `policy` from the task's initial state for at most `limit` actions.
/// The policy is consulted only at non-terminal states; returning an
/// inapplicable action is a [`SimError::Policy`].
pub fn run_policy<F>(
    task: &GroundTask,
    mut policy: F,
    rng: &mut ChaCha8Rng,
    limit: usize,
) -> Result<Trajectory, SimError>
where
    F: FnMut(&State, &mut ChaCha8Rng) -> Result<u32, String>,
{
    let mut states = vec![task.s0.clone()];
    let mut actions = Vec::new();
    let mut costs = Vec::new();
    loop {
        let current = states.last().unwrap();
        if is_goal(task, current) {
            return Ok(Trajectory { states, actions, costs, outcome: Outcome::Goal });
        }
        if is_dead_end(task, current) {
            return Ok(Trajectory { states, actions, costs, outcome: Outcome::DeadEnd });
        }
        if actions.len() >= limit {
            return Ok(Trajectory { states, actions, costs, outcome: Outcome::LengthLimit });
        }
        let step = actions.len();
        let a = policy(current, rng).map_err(|msg| SimError::Policy { step, msg })?;
        if !action_applicable(task, current, a) {
            return Err(SimError::Policy {
                step,
                msg: format!("policy chose inapplicable action {}", task.actions[a as usize].name),
            });
        }
        let current = states.last().unwrap();
        let (next, cost) = sample_transition(task, current, a, rng)?;
        states.push(next);
        actions.push(a);
        costs.push(cost);
    }
}

/// One `state-hash action cost` line per step, for `--trace` output.
pub fn format_trace(task: &GroundTask, traj: &Trajectory) -> String {
    let mut out = String::new();
    for (i, &a) in traj.actions.iter().enumerate() {
        out.push_str(&format!(
            "{:016x} {} {}\n",
            traj.states[i].content_hash(),
            task.actions[a as usize].name,
            traj.costs[i]
        ));
    }
    out.push_str(&format!("{:016x} - -\n", traj.states.last().unwrap().content_hash()));
    out
}
