//! Generalised policies for probabilistic planning domains.
//!
//! The pipeline: parse a PPDDL domain/problem pair ([`ppddl`]), ground it into
//! a factored stochastic shortest path task ([`ground`]), compute delete
//! relaxation heuristics and disjunctive action landmarks ([`heur`]), solve
//! small instances optimally with LRTDP ([`teacher`]), and train a relational
//! policy network ([`model`], [`trainer`]) whose weights transfer to every
//! problem of the same domain. [`gen`] provides benchmark problem generators
//! and [`eval`] the coverage/cost evaluation harness.

pub mod eval;
pub mod features;
pub mod gen;
pub mod ground;
pub mod heur;
pub mod model;
pub mod ppddl;
pub mod rng;
pub mod ssp;
pub mod teacher;
pub mod trainer;
