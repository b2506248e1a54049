//! Instantiates a lifted domain/problem pair into a factored SSP and derives
//! the connectivity a policy network needs: for every ground action the
//! ordered list of related propositions, and for every proposition the
//! per-schema groups of ground actions related to it.
//!
//! All index assignments are deterministic functions of declaration order,
//! so grounding the same pair twice is byte-identical and renaming objects
//! permutes the result without changing its structure.

use crate::ppddl::{Domain, Literal, Problem, Rat, Term};
use crate::ssp::State;
use num_traits::ToPrimitive;
use serde_json::json;
use std::collections::HashMap;

pub const DEFAULT_CAPACITY: u64 = 1_000_000;

#[derive(Debug, Clone, thiserror::Error)]
pub enum GroundError {
    #[error("task too large: {props} propositions / {actions} ground actions exceed the bound {bound}")]
    Capacity { props: u64, actions: u64, bound: u64 },
}

/// Schema-level view used for weight shapes: the canonical related-literal
/// pattern (precondition literals in textual order, then effect literals in
/// declaration order with adds before deletes, first occurrence kept) is
/// shared by every grounding of the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaShape {
    pub name: String,
    pub arity: usize,
    pub rel_pattern: Vec<Literal>,
    pub cost: f64,
}

impl SchemaShape {
    /// Number of related propositions of every ground action of this schema.
    pub fn related_count(&self) -> usize {
        self.rel_pattern.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredShape {
    pub name: String,
    pub arity: usize,
    /// Schemas that mention this predicate in precondition or effects, in
    /// declaration order. One pooled input slot per entry.
    pub slots: Vec<usize>,
}

impl PredShape {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainShape {
    pub schemas: Vec<SchemaShape>,
    pub preds: Vec<PredShape>,
}

/// Compute the problem-independent shape of a domain. Weight tensors and
/// module wiring patterns depend only on this.
pub fn domain_shape(domain: &Domain) -> DomainShape {
    let mut schemas = Vec::with_capacity(domain.schemas.len());
    for schema in &domain.schemas {
        let mut pattern: Vec<Literal> = Vec::new();
        let push = |lit: &Literal, pattern: &mut Vec<Literal>| {
            if !pattern.contains(lit) {
                pattern.push(lit.clone());
            }
        };
        for lit in &schema.precond {
            push(lit, &mut pattern);
        }
        for eff in &schema.effects {
            for lit in &eff.add {
                push(lit, &mut pattern);
            }
            for lit in &eff.del {
                push(lit, &mut pattern);
            }
        }
        schemas.push(SchemaShape {
            name: schema.name.clone(),
            arity: schema.arity(),
            rel_pattern: pattern,
            cost: rat_to_f64(schema.cost),
        });
    }
    let preds = domain
        .predicates
        .iter()
        .enumerate()
        .map(|(f, p)| PredShape {
            name: p.name.clone(),
            arity: p.arity(),
            slots: (0..schemas.len())
                .filter(|&s| schemas[s].rel_pattern.iter().any(|l| l.pred == f))
                .collect(),
        })
        .collect();
    DomainShape { schemas, preds }
}

fn rat_to_f64(r: Rat) -> f64 {
    r.to_f64().expect("rational fits in f64")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundProp {
    pub pred: usize,
    pub args: Vec<u32>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundEffect {
    pub prob: f64,
    pub prob_exact: Rat,
    pub add: Vec<u32>,
    pub del: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundAction {
    pub schema: usize,
    pub args: Vec<u32>,
    pub name: String,
    /// Precondition proposition indices, sorted ascending, deduplicated.
    pub pre: Vec<u32>,
    pub effects: Vec<GroundEffect>,
    pub cost: f64,
    /// Related propositions in the schema's canonical pattern order;
    /// positions may repeat a proposition when distinct pattern literals
    /// ground to the same atom.
    pub rel: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct GroundTask {
    pub domain_name: String,
    pub problem_name: String,
    pub shape: DomainShape,
    /// Domain constants followed by problem objects.
    pub objects: Vec<String>,
    pub props: Vec<GroundProp>,
    pub actions: Vec<GroundAction>,
    pub s0: State,
    /// Goal proposition indices, sorted ascending.
    pub goal: Vec<u32>,
    /// `contributors[p][k]` lists the ground actions of schema
    /// `shape.preds[pred(p)].slots[k]` related to proposition `p`, ascending.
    pub contributors: Vec<Vec<Vec<u32>>>,
}

impl GroundTask {
    pub fn prop_count(&self) -> usize {
        self.props.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    /// The ordered related propositions of one action.
    pub fn related_props(&self, action: u32) -> &[u32] {
        &self.actions[action as usize].rel
    }
}

/// Enumerate all bindings of `param_types` over the per-type object lists,
/// in lexicographic order of object indices.
struct Bindings<'a> {
    lists: Vec<&'a [u32]>,
    current: Vec<usize>,
    done: bool,
}

impl<'a> Bindings<'a> {
    fn new(lists: Vec<&'a [u32]>) -> Bindings<'a> {
        let done = lists.iter().any(|l| l.is_empty());
        let current = vec![0; lists.len()];
        Bindings { lists, current, done }
    }
}

impl Iterator for Bindings<'_> {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let item: Vec<u32> =
            self.current.iter().zip(&self.lists).map(|(&i, l)| l[i]).collect();
        let mut k = self.lists.len();
        loop {
            if k == 0 {
                self.done = true;
                break;
            }
            k -= 1;
            self.current[k] += 1;
            if self.current[k] < self.lists[k].len() {
                break;
            }
            self.current[k] = 0;
        }
        Some(item)
    }
}

pub fn ground(domain: &Domain, problem: &Problem) -> Result<GroundTask, GroundError> {
    ground_with_capacity(domain, problem, DEFAULT_CAPACITY)
}

pub fn ground_with_capacity(
    domain: &Domain,
    problem: &Problem,
    capacity: u64,
) -> Result<GroundTask, GroundError> {
    let shape = domain_shape(domain);

    // Object table: constants first, then problem objects, declaration order.
    let mut objects: Vec<(String, usize)> = Vec::new();
    for c in &domain.constants {
        objects.push((c.name.clone(), c.ty));
    }
    for o in &problem.objects {
        objects.push((o.name.clone(), o.ty));
    }
    let object_index: HashMap<&str, u32> =
        objects.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i as u32)).collect();

    // Per-type object lists (ascending by object index).
    let mut of_type: Vec<Vec<u32>> = vec![Vec::new(); domain.types.names.len()];
    for (i, (_, ty)) in objects.iter().enumerate() {
        for (t, lst) in of_type.iter_mut().enumerate() {
            if domain.types.is_subtype(*ty, t) {
                lst.push(i as u32);
            }
        }
    }

    let tuple_count = |tys: &[usize]| -> u64 {
        tys.iter().map(|&t| of_type[t].len() as u64).product()
    };
    let prop_total: u64 = domain
        .predicates
        .iter()
        .map(|p| tuple_count(&p.params.iter().map(|v| v.ty).collect::<Vec<_>>()))
        .sum();
    let action_total: u64 = domain
        .schemas
        .iter()
        .map(|s| tuple_count(&s.params.iter().map(|v| v.ty).collect::<Vec<_>>()))
        .sum();
    if prop_total > capacity || action_total > capacity {
        return Err(GroundError::Capacity { props: prop_total, actions: action_total, bound: capacity });
    }

    // Propositions: predicates in declaration order, bindings lexicographic.
    let mut props = Vec::with_capacity(prop_total as usize);
    let mut prop_index: HashMap<(usize, Vec<u32>), u32> = HashMap::with_capacity(prop_total as usize);
    for (f, pred) in domain.predicates.iter().enumerate() {
        let lists: Vec<&[u32]> = pred.params.iter().map(|v| of_type[v.ty].as_slice()).collect();
        for args in Bindings::new(lists) {
            let name = format_atom(&pred.name, &args, &objects);
            prop_index.insert((f, args.clone()), props.len() as u32);
            props.push(GroundProp { pred: f, args, name });
        }
    }

    // Ground actions: schemas in declaration order, bindings lexicographic,
    // instantiations violating an equality constraint dropped.
    let resolve = |term: Term, binding: &[u32]| -> u32 {
        match term {
            Term::Param(i) => binding[i],
            Term::Constant(c) => c as u32,
        }
    };
    let lookup = |lit: &Literal, binding: &[u32]| -> u32 {
        let args: Vec<u32> = lit.args.iter().map(|&t| resolve(t, binding)).collect();
        prop_index[&(lit.pred, args)]
    };
    let mut actions = Vec::new();
    for (si, schema) in domain.schemas.iter().enumerate() {
        let lists: Vec<&[u32]> = schema.params.iter().map(|v| of_type[v.ty].as_slice()).collect();
        'bind: for binding in Bindings::new(lists) {
            for eq in &schema.eq_constraints {
                let same = resolve(eq.left, &binding) == resolve(eq.right, &binding);
                if same == eq.negated {
                    continue 'bind;
                }
            }
            let mut pre: Vec<u32> = schema.precond.iter().map(|l| lookup(l, &binding)).collect();
            pre.sort_unstable();
            pre.dedup();
            let effects = schema
                .effects
                .iter()
                .map(|e| {
                    let mut add: Vec<u32> = e.add.iter().map(|l| lookup(l, &binding)).collect();
                    let mut del: Vec<u32> = e.del.iter().map(|l| lookup(l, &binding)).collect();
                    dedup_keep_first(&mut add);
                    dedup_keep_first(&mut del);
                    GroundEffect { prob: rat_to_f64(e.prob), prob_exact: e.prob, add, del }
                })
                .collect();
            let rel: Vec<u32> =
                shape.schemas[si].rel_pattern.iter().map(|l| lookup(l, &binding)).collect();
            actions.push(GroundAction {
                schema: si,
                args: binding.clone(),
                name: format_atom(&schema.name, &binding, &objects),
                pre,
                effects,
                cost: shape.schemas[si].cost,
                rel,
            });
        }
    }

    // Initial state and goal.
    let mut s0 = State::zeroed(props.len());
    for atom in &problem.init {
        let args: Vec<u32> = atom.args.iter().map(|a| object_index[a.as_str()]).collect();
        s0.set(prop_index[&(atom.pred, args)], true);
    }
    let mut goal: Vec<u32> = problem
        .goal
        .iter()
        .map(|atom| {
            let args: Vec<u32> = atom.args.iter().map(|a| object_index[a.as_str()]).collect();
            prop_index[&(atom.pred, args)]
        })
        .collect();
    goal.sort_unstable();
    goal.dedup();

    // Reverse connectivity: per proposition, per referencing schema slot,
    // the related ground actions.
    let mut contributors: Vec<Vec<Vec<u32>>> = props
        .iter()
        .map(|p| vec![Vec::new(); shape.preds[p.pred].slots.len()])
        .collect();
    let mut seen: Vec<u32> = Vec::new();
    for (ai, action) in actions.iter().enumerate() {
        seen.clear();
        for &p in &action.rel {
            if seen.contains(&p) {
                continue;
            }
            seen.push(p);
            let slot = shape.preds[props[p as usize].pred]
                .slots
                .iter()
                .position(|&s| s == action.schema)
                .expect("related predicate lists this schema as a slot");
            contributors[p as usize][slot].push(ai as u32);
        }
    }

    Ok(GroundTask {
        domain_name: domain.name.clone(),
        problem_name: problem.name.clone(),
        shape,
        objects: objects.into_iter().map(|(n, _)| n).collect(),
        props,
        actions,
        s0,
        goal,
        contributors,
    })
}

fn dedup_keep_first(xs: &mut Vec<u32>) {
    let mut seen = Vec::with_capacity(xs.len());
    xs.retain(|x| {
        if seen.contains(x) {
            false
        } else {
            seen.push(*x);
            true
        }
    });
}

fn format_atom(name: &str, args: &[u32], objects: &[(String, usize)]) -> String {
    if args.is_empty() {
        return name.to_string();
    }
    let mut s = format!("{}(", name);
    for (k, &a) in args.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        s.push_str(&objects[a as usize].0);
    }
    s.push(')');
    s
}

/// Which first-layer features the network consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FeatureMode {
    /// Truth and goal bits for related propositions plus the three landmark
    /// membership flags: input size 2M+3 per action of a schema with M
    /// related literals.
    LmCut,
    /// Truth and goal bits only: input size 2M.
    Plain,
}

impl FeatureMode {
    pub fn input_dim(self, related_count: usize) -> usize {
        match self {
            FeatureMode::LmCut => 2 * related_count + 3,
            FeatureMode::Plain => 2 * related_count,
        }
    }
}

/// Layer plan for a policy network over a ground task: `prop_layers` hidden
/// proposition layers interleaved with `prop_layers + 1` action layers, the
/// last action layer emitting one logit per ground action.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub prop_layers: usize,
    pub hidden_dim: usize,
    pub mode: FeatureMode,
}

impl NetworkSpec {
    pub fn action_layer_count(&self) -> usize {
        self.prop_layers + 1
    }

    /// Input width of an action module of a schema with `m` related literals
    /// at 1-based action layer `layer`.
    pub fn action_in_dim(&self, layer: usize, m: usize) -> usize {
        if layer == 1 {
            self.mode.input_dim(m)
        } else {
            self.hidden_dim * m
        }
    }

    /// Output width of an action module at 1-based action layer `layer`.
    pub fn action_out_dim(&self, layer: usize) -> usize {
        if layer == self.prop_layers + 1 {
            1
        } else {
            self.hidden_dim
        }
    }

    /// Input width of a proposition module of a predicate with `l` slots.
    pub fn prop_in_dim(&self, l: usize) -> usize {
        self.hidden_dim * l
    }

    /// Distinct shared-parameter keys: one per (action layer, schema) plus
    /// one per (proposition layer, predicate).
    pub fn weight_key_count(&self, shape: &DomainShape) -> usize {
        (self.prop_layers + 1) * shape.schemas.len() + self.prop_layers * shape.preds.len()
    }
}

pub fn build_network_spec(
    _task: &GroundTask,
    prop_layers: usize,
    hidden_dim: usize,
    mode: FeatureMode,
) -> NetworkSpec {
    NetworkSpec { prop_layers, hidden_dim, mode }
}

/// Debug dump of the grounding and network dimensions with stable field
/// names (`props`, `actions`, `relatedness`, `dims`).
pub fn dump_json(task: &GroundTask, spec: &NetworkSpec) -> serde_json::Value {
    json!({
        "domain": task.domain_name,
        "problem": task.problem_name,
        "props": task.props.iter().map(|p| p.name.clone()).collect::<Vec<_>>(),
        "actions": task.actions.iter().map(|a| json!({
            "name": a.name,
            "schema": task.shape.schemas[a.schema].name,
            "cost": a.cost,
            "pre": a.pre,
            "effects": a.effects.iter().map(|e| json!({
                "prob": e.prob,
                "add": e.add,
                "del": e.del,
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
        "relatedness": task.actions.iter().map(|a| a.rel.clone()).collect::<Vec<_>>(),
        "goal": task.goal,
        "init": task.s0.ones().collect::<Vec<u32>>(),
        "dims": {
            "prop_layers": spec.prop_layers,
            "hidden_dim": spec.hidden_dim,
            "schema_related_counts": task.shape.schemas.iter()
                .map(|s| json!({"schema": s.name, "m": s.related_count(), "first_layer_in": spec.mode.input_dim(s.related_count())}))
                .collect::<Vec<_>>(),
            "pred_slot_counts": task.shape.preds.iter()
                .map(|p| json!({"predicate": p.name, "l": p.slot_count()}))
                .collect::<Vec<_>>(),
            "weight_keys": spec.weight_key_count(&task.shape),
        },
    })
}
