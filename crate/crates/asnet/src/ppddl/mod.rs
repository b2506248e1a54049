//! PPDDL subset: typed objects, STRIPS preconditions with equality
//! constraints, probabilistic effects, per-schema action costs.
//!
//! Effect probabilities are exact rationals and sum-to-one is checked
//! exactly. A `(probabilistic ...)` list whose probabilities sum to less
//! than one is completed with an implicit no-op outcome; a sum above one is
//! a semantics error. Conditional effects, negative preconditions over
//! predicates, disjunctions and quantifiers are rejected as unsupported
//! rather than silently ignored.

mod lexer;
mod parser;
mod printer;

pub use parser::{parse_domain, parse_problem};
pub use printer::{print_domain, print_problem};

use num_rational::Ratio;

/// Exact rational used for effect probabilities and action costs.
pub type Rat = Ratio<i64>;

/// Source position of a token (1-based line and column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SrcPos {
    pub line: u32,
    pub col: u32,
}

impl std::fmt::Display for SrcPos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{pos}: syntax error: {msg}")]
    Syntax { pos: SrcPos, msg: String },
    #[error("{pos}: unsupported feature: {feature}")]
    Unsupported { pos: SrcPos, feature: String },
    #[error("{pos}: {msg}")]
    Semantics { pos: SrcPos, msg: String },
}

impl ParseError {
    pub fn pos(&self) -> SrcPos {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::Unsupported { pos, .. }
            | ParseError::Semantics { pos, .. } => *pos,
        }
    }
}

/// Type hierarchy. Index 0 is always the root type `object`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeTable {
    pub names: Vec<String>,
    pub parent: Vec<usize>,
}

impl Default for TypeTable {
    fn default() -> Self {
        TypeTable { names: vec!["object".to_string()], parent: vec![0] }
    }
}

impl TypeTable {
    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn insert(&mut self, name: &str) -> usize {
        match self.id_of(name) {
            Some(i) => i,
            None => {
                self.names.push(name.to_string());
                self.parent.push(0);
                self.names.len() - 1
            }
        }
    }

    /// True when `sub` equals `sup` or is a (transitive) descendant of it.
    pub fn is_subtype(&self, sub: usize, sup: usize) -> bool {
        let mut t = sub;
        loop {
            if t == sup {
                return true;
            }
            if t == 0 {
                return false;
            }
            t = self.parent[t];
        }
    }
}

/// A typed object or constant name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedName {
    pub name: String,
    pub ty: usize,
}

/// A typed schema or predicate parameter (`?x`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedVar {
    pub name: String,
    pub ty: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedVar>,
}

impl PredicateDecl {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// A term inside a schema body: either a schema parameter or a domain constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Param(usize),
    Constant(usize),
}

/// A positive literal over schema parameters and constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Literal {
    pub pred: usize,
    pub args: Vec<Term>,
}

/// An `(= a b)` or `(not (= a b))` precondition, resolved at ground time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EqConstraint {
    pub left: Term,
    pub right: Term,
    pub negated: bool,
}

/// One probabilistic outcome of an action: add and delete lists share no literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaEffect {
    pub prob: Rat,
    pub add: Vec<Literal>,
    pub del: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedVar>,
    pub precond: Vec<Literal>,
    pub eq_constraints: Vec<EqConstraint>,
    pub effects: Vec<SchemaEffect>,
    pub cost: Rat,
}

impl ActionSchema {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: TypeTable,
    pub predicates: Vec<PredicateDecl>,
    pub constants: Vec<TypedName>,
    pub schemas: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate_id(&self, name: &str) -> Option<usize> {
        self.predicates.iter().position(|p| p.name == name)
    }

    pub fn schema_id(&self, name: &str) -> Option<usize> {
        self.schemas.iter().position(|s| s.name == name)
    }
}

/// A ground atom over declared object names, as written in `:init`/`:goal`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundAtom {
    pub pred: usize,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domain_name: String,
    pub objects: Vec<TypedName>,
    pub init: Vec<GroundAtom>,
    pub goal: Vec<GroundAtom>,
}
