//! PPDDL emission. `parse(print(ast))` reproduces the AST structurally:
//! effects are printed in their normalized outcome form and the type table
//! is canonical, so the round trip is exact.

use super::*;
use std::fmt::Write;

/// Exact textual form of a rational: integer, terminating decimal when the
/// denominator divides a power of ten, otherwise `n/d`.
pub fn fmt_rat(r: Rat) -> String {
    let num = *r.numer();
    let den = *r.denom();
    if den == 1 {
        return num.to_string();
    }
    let (mut d2, mut rest) = (0u32, den);
    while rest % 2 == 0 {
        rest /= 2;
        d2 += 1;
    }
    let mut d5 = 0u32;
    while rest % 5 == 0 {
        rest /= 5;
        d5 += 1;
    }
    if rest == 1 && d2.max(d5) <= 15 {
        let digits = d2.max(d5);
        let scale = 10_i64.pow(digits) / den;
        let scaled = num.abs() * scale;
        let ipart = scaled / 10_i64.pow(digits);
        let fpart = scaled % 10_i64.pow(digits);
        let sign = if num < 0 { "-" } else { "" };
        return format!("{}{}.{:0width$}", sign, ipart, fpart, width = digits as usize);
    }
    format!("{}/{}", num, den)
}

fn fmt_typed_vars(vars: &[TypedVar], types: &TypeTable) -> String {
    vars.iter()
        .map(|v| format!("{} - {}", v.name, types.names[v.ty]))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_term(t: Term, schema: &ActionSchema, domain: &Domain) -> String {
    match t {
        Term::Param(i) => schema.params[i].name.clone(),
        Term::Constant(i) => domain.constants[i].name.clone(),
    }
}

fn fmt_literal(lit: &Literal, schema: &ActionSchema, domain: &Domain) -> String {
    let mut s = format!("({}", domain.predicates[lit.pred].name);
    for &arg in &lit.args {
        s.push(' ');
        s.push_str(&fmt_term(arg, schema, domain));
    }
    s.push(')');
    s
}

fn fmt_outcome(eff: &SchemaEffect, schema: &ActionSchema, domain: &Domain) -> String {
    let mut parts = Vec::new();
    for lit in &eff.add {
        parts.push(fmt_literal(lit, schema, domain));
    }
    for lit in &eff.del {
        parts.push(format!("(not {})", fmt_literal(lit, schema, domain)));
    }
    format!("(and {})", parts.join(" "))
}

pub fn print_domain(domain: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", domain.name);
    if !domain.requirements.is_empty() {
        let _ = writeln!(out, "  (:requirements {})", domain.requirements.join(" "));
    }
    if domain.types.names.len() > 1 {
        let decls: Vec<String> = domain
            .types
            .names
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, n)| format!("{} - {}", n, domain.types.names[domain.types.parent[i]]))
            .collect();
        let _ = writeln!(out, "  (:types {})", decls.join(" "));
    }
    if !domain.constants.is_empty() {
        let decls: Vec<String> = domain
            .constants
            .iter()
            .map(|c| format!("{} - {}", c.name, domain.types.names[c.ty]))
            .collect();
        let _ = writeln!(out, "  (:constants {})", decls.join(" "));
    }
    let _ = writeln!(out, "  (:predicates");
    for p in &domain.predicates {
        if p.params.is_empty() {
            let _ = writeln!(out, "    ({})", p.name);
        } else {
            let _ = writeln!(out, "    ({} {})", p.name, fmt_typed_vars(&p.params, &domain.types));
        }
    }
    let _ = writeln!(out, "  )");
    for schema in &domain.schemas {
        let _ = writeln!(out, "  (:action {}", schema.name);
        let _ = writeln!(out, "    :parameters ({})", fmt_typed_vars(&schema.params, &domain.types));
        let mut pre: Vec<String> =
            schema.precond.iter().map(|l| fmt_literal(l, schema, domain)).collect();
        for eq in &schema.eq_constraints {
            let core = format!(
                "(= {} {})",
                fmt_term(eq.left, schema, domain),
                fmt_term(eq.right, schema, domain)
            );
            pre.push(if eq.negated { format!("(not {})", core) } else { core });
        }
        let _ = writeln!(out, "    :precondition (and {})", pre.join(" "));
        if schema.effects.len() == 1 {
            let _ = writeln!(out, "    :effect {}", fmt_outcome(&schema.effects[0], schema, domain));
        } else {
            let branches: Vec<String> = schema
                .effects
                .iter()
                .map(|e| format!("{} {}", fmt_rat(e.prob), fmt_outcome(e, schema, domain)))
                .collect();
            let _ = writeln!(out, "    :effect (probabilistic {})", branches.join(" "));
        }
        if schema.cost != Rat::from_integer(1) {
            let _ = writeln!(out, "    :action-cost {}", fmt_rat(schema.cost));
        }
        let _ = writeln!(out, "  )");
    }
    let _ = writeln!(out, ")");
    out
}

pub fn print_problem(problem: &Problem, domain: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", problem.name);
    let _ = writeln!(out, "  (:domain {})", problem.domain_name);
    if !problem.objects.is_empty() {
        let decls: Vec<String> = problem
            .objects
            .iter()
            .map(|o| format!("{} - {}", o.name, domain.types.names[o.ty]))
            .collect();
        let _ = writeln!(out, "  (:objects {})", decls.join(" "));
    }
    let _ = writeln!(out, "  (:init");
    for atom in &problem.init {
        let _ = writeln!(out, "    ({})", fmt_atom_body(atom, domain));
    }
    let _ = writeln!(out, "  )");
    let goal: Vec<String> =
        problem.goal.iter().map(|a| format!("({})", fmt_atom_body(a, domain))).collect();
    let _ = writeln!(out, "  (:goal (and {}))", goal.join(" "));
    let _ = writeln!(out, ")");
    out
}

fn fmt_atom_body(atom: &GroundAtom, domain: &Domain) -> String {
    let mut s = domain.predicates[atom.pred].name.clone();
    for a in &atom.args {
        s.push(' ');
        s.push_str(a);
    }
    s
}
