//! All-outcomes determinization, delete relaxation, the additive and max
//! heuristics, and LM-cut disjunctive action landmarks.
//!
//! Unreachability is the `f64::INFINITY` sentinel; infinite values propagate
//! through max/sum but are never mixed into finite arithmetic silently.

use crate::ground::GroundTask;
use crate::ssp::State;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// One deterministic relaxed operator per (ground action, effect) pair:
/// the action's precondition, the effect's add list, no deletes.
#[derive(Debug, Clone)]
pub struct RelaxedOp {
    pub pre: Vec<u32>,
    pub add: Vec<u32>,
    pub cost: f64,
    /// Originating ground action.
    pub action: u32,
}

/// Relaxed task with two virtual propositions appended after the real ones:
/// a goal marker achieved by a zero-cost end operator, and an always-true
/// root that stands in for empty preconditions.
#[derive(Debug, Clone)]
pub struct RelaxedTask {
    pub nprops: usize,
    pub goal: Vec<u32>,
    /// Real operators first, the virtual end operator last.
    pub ops: Vec<RelaxedOp>,
    pub real_ops: usize,
    consumers: Vec<Vec<u32>>,
    achievers: Vec<Vec<u32>>,
}

impl RelaxedTask {
    #[inline]
    pub fn goal_marker(&self) -> u32 {
        self.nprops as u32
    }

    #[inline]
    pub fn root(&self) -> u32 {
        self.nprops as u32 + 1
    }

    fn node_count(&self) -> usize {
        self.nprops + 2
    }
}

pub fn determinize_relax(task: &GroundTask) -> RelaxedTask {
    let nprops = task.prop_count();
    let root = nprops as u32 + 1;
    let goal_marker = nprops as u32;
    let mut ops = Vec::new();
    for (ai, action) in task.actions.iter().enumerate() {
        for eff in &action.effects {
            let pre = if action.pre.is_empty() { vec![root] } else { action.pre.clone() };
            ops.push(RelaxedOp { pre, add: eff.add.clone(), cost: action.cost, action: ai as u32 });
        }
    }
    let real_ops = ops.len();
    let end_pre = if task.goal.is_empty() { vec![root] } else { task.goal.clone() };
    ops.push(RelaxedOp { pre: end_pre, add: vec![goal_marker], cost: 0.0, action: u32::MAX });

    let mut consumers = vec![Vec::new(); nprops + 2];
    let mut achievers = vec![Vec::new(); nprops + 2];
    for (oi, op) in ops.iter().enumerate() {
        for &p in &op.pre {
            consumers[p as usize].push(oi as u32);
        }
        for &p in &op.add {
            achievers[p as usize].push(oi as u32);
        }
    }
    RelaxedTask { nprops, goal: task.goal.clone(), ops, real_ops, consumers, achievers }
}

#[derive(PartialEq)]
struct HeapEntry {
    val: f64,
    prop: u32,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on value; finite values only ever enter the queue.
        other
            .val
            .partial_cmp(&self.val)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.prop.cmp(&self.prop))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Combine {
    Sum,
    Max,
}

/// Generalized Dijkstra over the relaxed task: returns per-node values and
/// per-op values under the given cost vector.
fn fixpoint(
    rt: &RelaxedTask,
    state: &State,
    costs: &[f64],
    combine: Combine,
) -> (Vec<f64>, Vec<f64>) {
    let n = rt.node_count();
    let mut val = vec![f64::INFINITY; n];
    let mut op_val = vec![f64::INFINITY; rt.ops.len()];
    let mut unsat: Vec<u32> = rt.ops.iter().map(|o| o.pre.len() as u32).collect();
    let mut op_acc = vec![0.0f64; rt.ops.len()];
    let mut heap = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<HeapEntry>, val: &mut Vec<f64>, p: u32, v: f64| {
        if v < val[p as usize] {
            val[p as usize] = v;
            heap.push(HeapEntry { val: v, prop: p });
        }
    };
    for p in state.ones() {
        push(&mut heap, &mut val, p, 0.0);
    }
    push(&mut heap, &mut val, rt.root(), 0.0);
    while let Some(HeapEntry { val: v, prop: p }) = heap.pop() {
        if v > val[p as usize] {
            continue;
        }
        for &oi in &rt.consumers[p as usize] {
            let o = oi as usize;
            if unsat[o] == 0 {
                continue;
            }
            match combine {
                Combine::Sum => op_acc[o] += v,
                // Pops are nondecreasing, so the last precondition to
                // finalize carries the max.
                Combine::Max => op_acc[o] = v,
            }
            unsat[o] -= 1;
            if unsat[o] == 0 {
                let ov = costs[o] + op_acc[o];
                op_val[o] = ov;
                for &q in &rt.ops[o].add {
                    push(&mut heap, &mut val, q, ov);
                }
            }
        }
    }
    (val, op_val)
}

fn aggregate(rt: &RelaxedTask, vals: &[f64], combine: Combine) -> f64 {
    let mut acc = 0.0f64;
    for &g in &rt.goal {
        let v = vals[g as usize];
        if v.is_infinite() {
            return f64::INFINITY;
        }
        match combine {
            Combine::Sum => acc += v,
            Combine::Max => acc = acc.max(v),
        }
    }
    acc
}

fn base_costs(rt: &RelaxedTask) -> Vec<f64> {
    rt.ops.iter().map(|o| o.cost).collect()
}

/// Additive heuristic: sum over goal literals of cheapest-achiever chains.
pub fn hadd(rt: &RelaxedTask, state: &State) -> f64 {
    let (vals, _) = fixpoint(rt, state, &base_costs(rt), Combine::Sum);
    aggregate(rt, &vals, Combine::Sum)
}

/// Max heuristic: most expensive goal literal under cheapest-achiever chains.
pub fn hmax(rt: &RelaxedTask, state: &State) -> f64 {
    let (vals, _) = fixpoint(rt, state, &base_costs(rt), Combine::Max);
    aggregate(rt, &vals, Combine::Max)
}

/// Disjunctive action landmarks and the LM-cut value at one state.
#[derive(Debug, Clone)]
pub struct LandmarkSet {
    /// Each landmark is a sorted, deduplicated set of ground action indices.
    pub landmarks: Vec<Vec<u32>>,
    pub hvalue: f64,
    pub unreachable: bool,
}

impl LandmarkSet {
    /// Membership flags for one action: sole member of some landmark, member
    /// of some landmark of two or more actions, or in no landmark at all.
    pub fn flags(&self, action: u32) -> [f64; 3] {
        let mut sole = false;
        let mut shared = false;
        for lm in &self.landmarks {
            if lm.binary_search(&action).is_ok() {
                if lm.len() == 1 {
                    sole = true;
                } else {
                    shared = true;
                }
            }
        }
        if sole || shared {
            [f64::from(sole as u8), f64::from(shared as u8), 0.0]
        } else {
            [0.0, 0.0, 1.0]
        }
    }
}

const ZERO_EPS: f64 = 1e-12;
const MAX_ROUNDS: usize = 100_000;

/// Landmark extraction by iterated justification-graph cuts: compute h-max,
/// pick each operator's most expensive precondition as its supporter, take
/// the cut between the zero-cost goal zone and the part reachable from the
/// state, then subtract the cut's cheapest cost and repeat.
pub fn lmcut(rt: &RelaxedTask, state: &State) -> LandmarkSet {
    let goal_node = rt.goal_marker() as usize;
    let mut costs = base_costs(rt);
    let mut hvalue = 0.0f64;
    let mut landmarks: Vec<Vec<u32>> = Vec::new();
    for _round in 0..MAX_ROUNDS {
        let (vals, op_vals) = fixpoint(rt, state, &costs, Combine::Max);
        let hg = vals[goal_node];
        if hg.is_infinite() {
            return LandmarkSet { landmarks: Vec::new(), hvalue: f64::INFINITY, unreachable: true };
        }
        if hg <= ZERO_EPS {
            break;
        }
        // Supporter: the precondition with maximal value; ties go to the
        // lowest proposition index (preconditions are stored ascending).
        let mut supporter = vec![u32::MAX; rt.ops.len()];
        for (o, op) in rt.ops.iter().enumerate() {
            if op_vals[o].is_infinite() {
                continue;
            }
            let mut best = op.pre[0];
            let mut best_v = vals[op.pre[0] as usize];
            for &p in &op.pre[1..] {
                if vals[p as usize] > best_v {
                    best_v = vals[p as usize];
                    best = p;
                }
            }
            supporter[o] = best;
        }
        // Goal zone: nodes that reach the goal marker through zero-cost
        // justification edges, walking backwards.
        let mut zone = vec![false; rt.node_count()];
        zone[goal_node] = true;
        let mut stack = vec![goal_node as u32];
        while let Some(q) = stack.pop() {
            for &oi in &rt.achievers[q as usize] {
                let o = oi as usize;
                if supporter[o] == u32::MAX || costs[o] > ZERO_EPS {
                    continue;
                }
                let s = supporter[o];
                if !zone[s as usize] {
                    zone[s as usize] = true;
                    stack.push(s);
                }
            }
        }
        // Expand forward from the state through supporter edges without
        // entering the zone; edges that do enter it form the cut.
        let mut seen = vec![false; rt.node_count()];
        let mut in_cut = vec![false; rt.ops.len()];
        let mut cut: Vec<u32> = Vec::new();
        let mut stack: Vec<u32> = Vec::new();
        let visit = |p: u32, seen: &mut Vec<bool>, stack: &mut Vec<u32>| {
            if !seen[p as usize] && !zone[p as usize] {
                seen[p as usize] = true;
                stack.push(p);
            }
        };
        for p in state.ones() {
            visit(p, &mut seen, &mut stack);
        }
        visit(rt.root(), &mut seen, &mut stack);
        while let Some(u) = stack.pop() {
            for &oi in &rt.consumers[u as usize] {
                let o = oi as usize;
                if supporter[o] != u {
                    continue;
                }
                for &q in &rt.ops[o].add {
                    if zone[q as usize] {
                        if !in_cut[o] {
                            in_cut[o] = true;
                            cut.push(oi);
                        }
                    } else {
                        visit(q, &mut seen, &mut stack);
                    }
                }
            }
        }
        debug_assert!(!cut.is_empty(), "cut must be nonempty while h-max is positive");
        if cut.is_empty() {
            break;
        }
        let m = cut.iter().map(|&o| costs[o as usize]).fold(f64::INFINITY, f64::min);
        hvalue += m;
        let mut landmark: Vec<u32> = cut
            .iter()
            .map(|&o| rt.ops[o as usize].action)
            .filter(|&a| a != u32::MAX)
            .collect();
        landmark.sort_unstable();
        landmark.dedup();
        if !landmark.is_empty() && !landmarks.contains(&landmark) {
            landmarks.push(landmark);
        }
        for &o in &cut {
            costs[o as usize] -= m;
        }
    }
    LandmarkSet { landmarks, hvalue, unreachable: false }
}

/// Flag vector for one action against a landmark set; see
/// [`LandmarkSet::flags`].
pub fn landmark_flags(lms: &LandmarkSet, action: u32) -> [f64; 3] {
    lms.flags(action)
}

/// Brute-force reference implementations, deliberately independent of the
/// algorithms above; used by the test suites on tasks with few propositions.
pub mod oracle {
    use super::*;
    use std::collections::HashMap;

    /// Optimal delete-relaxed plan cost by Dijkstra over reached-proposition
    /// sets. Only valid for tasks with at most 25 propositions.
    pub fn relaxed_plan_cost(rt: &RelaxedTask, state: &State) -> f64 {
        assert!(rt.nprops <= 25, "subset search only supports small tasks");
        let to_mask = |s: &State| -> u32 { s.ones().fold(0u32, |m, p| m | (1 << p)) };
        let goal_mask: u32 = rt.goal.iter().fold(0u32, |m, &p| m | (1 << p));
        let start = to_mask(state);
        if start & goal_mask == goal_mask {
            return 0.0;
        }
        let mut dist: HashMap<u32, f64> = HashMap::new();
        dist.insert(start, 0.0);
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
        heap.push(HeapEntry { val: 0.0, prop: 0 });
        let mut masks: Vec<u32> = vec![start];
        while let Some(HeapEntry { val, prop }) = heap.pop() {
            let mask = masks[prop as usize];
            if dist.get(&mask).copied().unwrap_or(f64::INFINITY) < val {
                continue;
            }
            if mask & goal_mask == goal_mask {
                return val;
            }
            for op in &rt.ops[..rt.real_ops] {
                let pre_mask: u32 = op
                    .pre
                    .iter()
                    .filter(|&&p| (p as usize) < rt.nprops)
                    .fold(0u32, |m, &p| m | (1 << p));
                if op.pre.iter().any(|&p| p as usize >= rt.nprops) {
                    // Root-only precondition stands for an empty one.
                    if op.pre.iter().any(|&p| p != rt.root()) {
                        continue;
                    }
                }
                if mask & pre_mask != pre_mask {
                    continue;
                }
                let add_mask: u32 = op.add.iter().fold(0u32, |m, &p| m | (1 << p));
                let next = mask | add_mask;
                if next == mask {
                    continue;
                }
                let nv = val + op.cost;
                if nv < dist.get(&next).copied().unwrap_or(f64::INFINITY) {
                    dist.insert(next, nv);
                    masks.push(next);
                    heap.push(HeapEntry { val: nv, prop: (masks.len() - 1) as u32 });
                }
            }
        }
        f64::INFINITY
    }

    /// Seeded random STRIPS toy task as PPDDL text: a handful of nullary
    /// predicates and unit-cost actions with random preconditions and
    /// add/delete lists.
    pub fn random_toy(seed: u64) -> (String, String) {
        use rand::Rng;
        let mut rng = crate::rng::stream(seed, &[0x70_79]);
        let nprops = rng.gen_range(4..=12usize);
        let nacts = rng.gen_range(3..=10usize);
        let mut domain = String::from("(define (domain toy)\n  (:predicates");
        for p in 0..nprops {
            domain.push_str(&format!(" (p{})", p));
        }
        domain.push_str(")\n");
        for a in 0..nacts {
            let npre = rng.gen_range(0..=2usize);
            let mut pre = Vec::new();
            for _ in 0..npre {
                pre.push(format!("(p{})", rng.gen_range(0..nprops)));
            }
            let mut adds = Vec::new();
            let mut dels = Vec::new();
            for _ in 0..rng.gen_range(1..=3usize) {
                adds.push(rng.gen_range(0..nprops));
            }
            adds.sort_unstable();
            adds.dedup();
            for _ in 0..rng.gen_range(0..=1usize) {
                let d = rng.gen_range(0..nprops);
                if !adds.contains(&d) {
                    dels.push(d);
                }
            }
            let mut eff: Vec<String> = adds.iter().map(|p| format!("(p{})", p)).collect();
            eff.extend(dels.iter().map(|p| format!("(not (p{}))", p)));
            let body = if rng.gen_bool(0.5) {
                format!("(and {})", eff.join(" "))
            } else {
                format!("(probabilistic 0.5 (and {}))", eff.join(" "))
            };
            domain.push_str(&format!(
                "  (:action a{} :parameters () :precondition (and {}) :effect {})\n",
                a,
                pre.join(" "),
                body
            ));
        }
        domain.push(')');
        let ninit = rng.gen_range(1..=2usize);
        let mut init = Vec::new();
        for _ in 0..ninit {
            init.push(format!("(p{})", rng.gen_range(0..nprops)));
        }
        let ngoal = rng.gen_range(1..=2usize);
        let mut goal = Vec::new();
        for _ in 0..ngoal {
            goal.push(format!("(p{})", rng.gen_range(0..nprops)));
        }
        let problem = format!(
            "(define (problem toy{}) (:domain toy) (:init {}) (:goal (and {})))",
            seed,
            init.join(" "),
            goal.join(" ")
        );
        (domain, problem)
    }
}
