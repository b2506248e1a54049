//! Recursive-descent parser from token stream to validated AST.

use super::lexer::{lex, Tok, TokKind};
use super::*;
use num_traits::{CheckedAdd, CheckedMul};

const MAX_DEPTH: usize = 200;
/// Largest denominator accepted for a probability literal.
const MAX_DEN: i64 = 1_000_000_000_000_000;

#[derive(Debug, Clone)]
enum Sexpr {
    Atom(String, SrcPos),
    List(Vec<Sexpr>, SrcPos),
}

impl Sexpr {
    fn pos(&self) -> SrcPos {
        match self {
            Sexpr::Atom(_, p) | Sexpr::List(_, p) => *p,
        }
    }
}

fn syntax(pos: SrcPos, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { pos, msg: msg.into() }
}

fn semantics(pos: SrcPos, msg: impl Into<String>) -> ParseError {
    ParseError::Semantics { pos, msg: msg.into() }
}

fn unsupported(pos: SrcPos, feature: impl Into<String>) -> ParseError {
    ParseError::Unsupported { pos, feature: feature.into() }
}

fn read_sexprs(toks: &[Tok]) -> Result<Vec<Sexpr>, ParseError> {
    let mut stack: Vec<(Vec<Sexpr>, SrcPos)> = Vec::new();
    let mut top: Vec<Sexpr> = Vec::new();
    for t in toks {
        match &t.kind {
            TokKind::LParen => {
                if stack.len() >= MAX_DEPTH {
                    return Err(syntax(t.pos, "expression nested too deeply"));
                }
                stack.push((std::mem::take(&mut top), t.pos));
            }
            TokKind::RParen => match stack.pop() {
                Some((outer, open_pos)) => {
                    let items = std::mem::replace(&mut top, outer);
                    top.push(Sexpr::List(items, open_pos));
                }
                None => return Err(syntax(t.pos, "unmatched ')'")),
            },
            TokKind::Sym(s) => top.push(Sexpr::Atom(s.clone(), t.pos)),
        }
    }
    if let Some((_, pos)) = stack.last() {
        return Err(syntax(*pos, "unclosed '('"));
    }
    Ok(top)
}

fn read_single(text: &str, what: &str) -> Result<Sexpr, ParseError> {
    let tops = read_sexprs(&lex(text))?;
    let mut iter = tops.into_iter();
    match iter.next() {
        None => Err(syntax(SrcPos { line: 1, col: 1 }, format!("expected a {} definition", what))),
        Some(first) => match iter.next() {
            Some(extra) => Err(syntax(extra.pos(), "unexpected trailing content")),
            None => Ok(first),
        },
    }
}

fn atom<'a>(s: &'a Sexpr, what: &str) -> Result<(&'a str, SrcPos), ParseError> {
    match s {
        Sexpr::Atom(a, p) => Ok((a.as_str(), *p)),
        Sexpr::List(_, p) => Err(syntax(*p, format!("expected {}, found a list", what))),
    }
}

fn list<'a>(s: &'a Sexpr, what: &str) -> Result<(&'a [Sexpr], SrcPos), ParseError> {
    match s {
        Sexpr::List(items, p) => Ok((items.as_slice(), *p)),
        Sexpr::Atom(a, p) => Err(syntax(*p, format!("expected {}, found `{}`", what, a))),
    }
}

fn parse_rational(s: &str, pos: SrcPos) -> Result<Rat, ParseError> {
    let bad = || semantics(pos, format!("invalid number `{}`", s));
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.parse().map_err(|_| bad())?;
        let d: i64 = d.parse().map_err(|_| bad())?;
        if d <= 0 {
            return Err(bad());
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.len() > 15 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_abs = int.trim_start_matches(['-', '+']);
        if !int_abs.chars().all(|c| c.is_ascii_digit()) || (int_abs.is_empty() && frac.is_empty()) {
            return Err(bad());
        }
        let whole: i64 = if int_abs.is_empty() { 0 } else { int_abs.parse().map_err(|_| bad())? };
        let den = 10_i64.pow(frac.len() as u32);
        let frac_num: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = whole.checked_mul(den).and_then(|w| w.checked_add(frac_num)).ok_or_else(bad)?;
        let num = if negative { -num } else { num };
        return Ok(Rat::new(num, den));
    }
    let n: i64 = s.parse().map_err(|_| bad())?;
    Ok(Rat::from_integer(n))
}

/// Parse a PDDL typed list `a b - t c d` into (name, type-name, pos) triples;
/// trailing names without a `-` marker get `default_ty`.
fn parse_typed_list(
    items: &[Sexpr],
    default_ty: &str,
) -> Result<Vec<(String, String, SrcPos)>, ParseError> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, SrcPos)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let (s, pos) = atom(&items[i], "a name")?;
        if s == "-" {
            if pending.is_empty() {
                return Err(syntax(pos, "`-` without preceding names"));
            }
            i += 1;
            let (ty, typos) = match items.get(i) {
                Some(t) => atom(t, "a type name")?,
                None => return Err(syntax(pos, "`-` without a following type")),
            };
            if ty == "-" {
                return Err(syntax(typos, "`-` is not a type name"));
            }
            for (name, npos) in pending.drain(..) {
                out.push((name, ty.to_string(), npos));
            }
        } else {
            pending.push((s.to_string(), pos));
        }
        i += 1;
    }
    for (name, npos) in pending {
        out.push((name, default_ty.to_string(), npos));
    }
    Ok(out)
}

const SUPPORTED_REQUIREMENTS: [&str; 4] =
    [":typing", ":probabilistic-effects", ":strips", ":equality"];

struct SchemaCtx<'a> {
    predicates: &'a [PredicateDecl],
    types: &'a TypeTable,
    constants: &'a [TypedName],
    params: &'a [TypedVar],
}

impl SchemaCtx<'_> {
    fn resolve_term(&self, name: &str, pos: SrcPos) -> Result<(Term, usize), ParseError> {
        if name.starts_with('?') {
            match self.params.iter().position(|p| p.name == name) {
                Some(i) => Ok((Term::Param(i), self.params[i].ty)),
                None => Err(semantics(pos, format!("undeclared parameter `{}`", name))),
            }
        } else {
            match self.constants.iter().position(|c| c.name == name) {
                Some(i) => Ok((Term::Constant(i), self.constants[i].ty)),
                None => Err(semantics(pos, format!("undeclared constant `{}`", name))),
            }
        }
    }

    fn parse_literal(&self, items: &[Sexpr], pos: SrcPos) -> Result<Literal, ParseError> {
        let (pname, ppos) = atom(&items[0], "a predicate name")?;
        let pred = self
            .predicates
            .iter()
            .position(|p| p.name == pname)
            .ok_or_else(|| semantics(ppos, format!("unknown predicate `{}`", pname)))?;
        let decl = &self.predicates[pred];
        if items.len() - 1 != decl.arity() {
            return Err(semantics(
                pos,
                format!("predicate `{}` expects {} arguments, got {}", pname, decl.arity(), items.len() - 1),
            ));
        }
        let mut args = Vec::with_capacity(decl.arity());
        for (k, item) in items[1..].iter().enumerate() {
            let (tname, tpos) = atom(item, "a term")?;
            let (term, ty) = self.resolve_term(tname, tpos)?;
            if !self.types.is_subtype(ty, decl.params[k].ty) {
                return Err(semantics(
                    tpos,
                    format!(
                        "argument {} of `{}` must have type `{}`",
                        k + 1,
                        pname,
                        self.types.names[decl.params[k].ty]
                    ),
                ));
            }
            args.push(term);
        }
        Ok(Literal { pred, args })
    }
}

fn parse_precondition(
    sexpr: &Sexpr,
    ctx: &SchemaCtx,
) -> Result<(Vec<Literal>, Vec<EqConstraint>), ParseError> {
    let mut lits = Vec::new();
    let mut eqs = Vec::new();
    let (items, _) = list(sexpr, "a precondition")?;
    if items.is_empty() {
        return Ok((lits, eqs));
    }
    let conjuncts: Vec<&Sexpr> = match &items[0] {
        Sexpr::Atom(h, _) if h == "and" => items[1..].iter().collect(),
        _ => vec![sexpr],
    };
    for c in conjuncts {
        let (citems, cpos) = list(c, "a precondition literal")?;
        if citems.is_empty() {
            return Err(syntax(cpos, "empty precondition literal"));
        }
        let (head, _) = atom(&citems[0], "a predicate name")?;
        match head {
            "=" => {
                if citems.len() != 3 {
                    return Err(syntax(cpos, "`=` takes exactly two terms"));
                }
                let (l, lp) = atom(&citems[1], "a term")?;
                let (r, rp) = atom(&citems[2], "a term")?;
                let (left, _) = ctx.resolve_term(l, lp)?;
                let (right, _) = ctx.resolve_term(r, rp)?;
                eqs.push(EqConstraint { left, right, negated: false });
            }
            "not" => {
                if citems.len() != 2 {
                    return Err(syntax(cpos, "`not` takes exactly one argument"));
                }
                let (inner, ipos) = list(&citems[1], "a literal")?;
                match inner.first() {
                    Some(Sexpr::Atom(h, _)) if h == "=" => {
                        if inner.len() != 3 {
                            return Err(syntax(ipos, "`=` takes exactly two terms"));
                        }
                        let (l, lp) = atom(&inner[1], "a term")?;
                        let (r, rp) = atom(&inner[2], "a term")?;
                        let (left, _) = ctx.resolve_term(l, lp)?;
                        let (right, _) = ctx.resolve_term(r, rp)?;
                        eqs.push(EqConstraint { left, right, negated: true });
                    }
                    _ => {
                        return Err(unsupported(cpos, "negative precondition over a predicate"));
                    }
                }
            }
            "or" | "imply" | "exists" | "forall" | "when" | "oneof" => {
                return Err(unsupported(cpos, format!("`{}` in precondition", head)));
            }
            _ => lits.push(ctx.parse_literal(citems, cpos)?),
        }
    }
    Ok((lits, eqs))
}

enum EffItem {
    Add(Literal),
    Del(Literal),
    Prob(Vec<(Rat, Vec<EffItem>)>, SrcPos),
}

fn parse_effect_items(sexpr: &Sexpr, ctx: &SchemaCtx) -> Result<Vec<EffItem>, ParseError> {
    let (items, _) = list(sexpr, "an effect")?;
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&Sexpr> = match &items[0] {
        Sexpr::Atom(h, _) if h == "and" => items[1..].iter().collect(),
        _ => vec![sexpr],
    };
    let mut out = Vec::new();
    for part in parts {
        let (pitems, ppos) = list(part, "an effect term")?;
        if pitems.is_empty() {
            return Err(syntax(ppos, "empty effect term"));
        }
        let (head, _) = atom(&pitems[0], "an effect keyword or predicate")?;
        match head {
            "not" => {
                if pitems.len() != 2 {
                    return Err(syntax(ppos, "`not` takes exactly one argument"));
                }
                let (inner, ipos) = list(&pitems[1], "a literal")?;
                if inner.is_empty() {
                    return Err(syntax(ipos, "empty literal"));
                }
                out.push(EffItem::Del(ctx.parse_literal(inner, ipos)?));
            }
            "probabilistic" => {
                if pitems.len() < 3 || (pitems.len() - 1) % 2 != 0 {
                    return Err(syntax(ppos, "`probabilistic` takes probability/effect pairs"));
                }
                let mut branches = Vec::new();
                let mut k = 1;
                while k < pitems.len() {
                    let (ps, pp) = atom(&pitems[k], "a probability")?;
                    let prob = parse_rational(ps, pp)?;
                    if prob <= Rat::from_integer(0) || prob > Rat::from_integer(1) {
                        return Err(semantics(pp, format!("probability `{}` is outside (0, 1]", ps)));
                    }
                    if *prob.denom() > MAX_DEN {
                        return Err(semantics(pp, "probability denominator too large"));
                    }
                    branches.push((prob, parse_effect_items(&pitems[k + 1], ctx)?));
                    k += 2;
                }
                out.push(EffItem::Prob(branches, ppos));
            }
            "when" => return Err(unsupported(ppos, "conditional effect")),
            "forall" | "oneof" => return Err(unsupported(ppos, format!("`{}` effect", head))),
            "increase" | "decrease" | "assign" => {
                return Err(unsupported(ppos, format!("fluent effect `{}` (use :action-cost)", head)));
            }
            _ => out.push(EffItem::Add(ctx.parse_literal(pitems, ppos)?)),
        }
    }
    Ok(out)
}

#[derive(Clone)]
struct Outcome {
    prob: Rat,
    add: Vec<Literal>,
    del: Vec<Literal>,
}

fn push_unique(list: &mut Vec<Literal>, lit: &Literal) {
    if !list.contains(lit) {
        list.push(lit.clone());
    }
}

fn rat_mul(a: Rat, b: Rat, pos: SrcPos) -> Result<Rat, ParseError> {
    a.checked_mul(&b).ok_or_else(|| semantics(pos, "probability arithmetic overflow"))
}

fn rat_add(a: Rat, b: Rat, pos: SrcPos) -> Result<Rat, ParseError> {
    a.checked_add(&b).ok_or_else(|| semantics(pos, "probability arithmetic overflow"))
}

/// Flatten an effect formula into a list of (probability, add, delete)
/// outcomes. Deterministic literals distribute over every outcome; nested
/// `probabilistic` lists multiply out; a list summing to p < 1 gains an
/// implicit no-op outcome of probability 1 - p.
fn normalize_effects(items: Vec<EffItem>, pos: SrcPos) -> Result<Vec<Outcome>, ParseError> {
    let one = Rat::from_integer(1);
    let mut outcomes = vec![Outcome { prob: one, add: Vec::new(), del: Vec::new() }];
    for item in items {
        match item {
            EffItem::Add(lit) => {
                for o in &mut outcomes {
                    push_unique(&mut o.add, &lit);
                }
            }
            EffItem::Del(lit) => {
                for o in &mut outcomes {
                    push_unique(&mut o.del, &lit);
                }
            }
            EffItem::Prob(branches, bpos) => {
                let mut subs: Vec<Outcome> = Vec::new();
                let mut total = Rat::from_integer(0);
                for (p, sub_items) in branches {
                    total = rat_add(total, p, bpos)?;
                    for sub in normalize_effects(sub_items, bpos)? {
                        subs.push(Outcome {
                            prob: rat_mul(sub.prob, p, bpos)?,
                            add: sub.add,
                            del: sub.del,
                        });
                    }
                }
                if total > one {
                    return Err(semantics(
                        bpos,
                        format!("probabilities sum to {} > 1", total),
                    ));
                }
                if total < one {
                    subs.push(Outcome { prob: one - total, add: Vec::new(), del: Vec::new() });
                }
                let mut crossed = Vec::with_capacity(outcomes.len() * subs.len());
                for o in &outcomes {
                    for s in &subs {
                        let mut add = o.add.clone();
                        let mut del = o.del.clone();
                        for lit in &s.add {
                            push_unique(&mut add, lit);
                        }
                        for lit in &s.del {
                            push_unique(&mut del, lit);
                        }
                        crossed.push(Outcome { prob: rat_mul(o.prob, s.prob, bpos)?, add, del });
                    }
                }
                outcomes = crossed;
            }
        }
    }
    let mut total = Rat::from_integer(0);
    for o in &outcomes {
        total = rat_add(total, o.prob, pos)?;
    }
    debug_assert_eq!(total, one);
    for o in &outcomes {
        for lit in &o.add {
            if o.del.contains(lit) {
                return Err(semantics(pos, "an effect both adds and deletes the same literal"));
            }
        }
    }
    Ok(outcomes)
}

fn parse_action(
    items: &[Sexpr],
    pos: SrcPos,
    predicates: &[PredicateDecl],
    types: &mut TypeTable,
    constants: &[TypedName],
) -> Result<ActionSchema, ParseError> {
    if items.len() < 2 {
        return Err(syntax(pos, ":action requires a name"));
    }
    let (name, npos) = atom(&items[1], "an action name")?;
    if name.starts_with(':') || name.starts_with('?') {
        return Err(syntax(npos, "invalid action name"));
    }
    let mut params: Vec<TypedVar> = Vec::new();
    let mut precond = None;
    let mut effect = None;
    let mut cost = Rat::from_integer(1);
    let mut k = 2;
    while k < items.len() {
        let (key, kpos) = atom(&items[k], "an action section keyword")?;
        let value = items.get(k + 1).ok_or_else(|| syntax(kpos, format!("`{}` requires a value", key)))?;
        match key {
            ":parameters" => {
                let (pitems, _) = list(value, "a parameter list")?;
                for (pname, tyname, ppos) in parse_typed_list(pitems, "object")? {
                    if !pname.starts_with('?') {
                        return Err(syntax(ppos, format!("parameter `{}` must start with `?`", pname)));
                    }
                    if params.iter().any(|p| p.name == pname) {
                        return Err(semantics(ppos, format!("duplicate parameter `{}`", pname)));
                    }
                    let ty = types
                        .id_of(&tyname)
                        .ok_or_else(|| semantics(ppos, format!("unknown type `{}`", tyname)))?;
                    params.push(TypedVar { name: pname, ty });
                }
            }
            ":precondition" => precond = Some(value),
            ":effect" => effect = Some(value),
            ":action-cost" => {
                let (cs, cpos) = atom(value, "a cost")?;
                cost = parse_rational(cs, cpos)?;
                if cost <= Rat::from_integer(0) {
                    return Err(semantics(cpos, "action cost must be positive"));
                }
            }
            _ => return Err(unsupported(kpos, format!("action section `{}`", key))),
        }
        k += 2;
    }
    let ctx = SchemaCtx { predicates, types, constants, params: &params };
    let (precond, eq_constraints) = match precond {
        Some(p) => parse_precondition(p, &ctx)?,
        None => (Vec::new(), Vec::new()),
    };
    let effects = match effect {
        Some(e) => {
            let items = parse_effect_items(e, &ctx)?;
            normalize_effects(items, e.pos())?
        }
        None => vec![Outcome { prob: Rat::from_integer(1), add: Vec::new(), del: Vec::new() }],
    };
    let effects = effects
        .into_iter()
        .map(|o| SchemaEffect { prob: o.prob, add: o.add, del: o.del })
        .collect();
    Ok(ActionSchema { name: name.to_string(), params, precond, eq_constraints, effects, cost })
}

/// Reorder the type table so that `object` comes first and the remaining
/// types are alphabetical, remapping every stored type id. Makes the AST a
/// pure function of domain content rather than declaration order, which is
/// what the print/parse round-trip guarantee needs.
fn canonicalize_types(domain: &mut Domain) {
    let table = &domain.types;
    let mut order: Vec<usize> = (1..table.names.len()).collect();
    order.sort_by(|&a, &b| table.names[a].cmp(&table.names[b]));
    let mut old_to_new = vec![0usize; table.names.len()];
    let mut names = vec!["object".to_string()];
    for (new_idx, &old) in order.iter().enumerate() {
        old_to_new[old] = new_idx + 1;
        names.push(table.names[old].clone());
    }
    let mut parent = vec![0usize];
    for &old in &order {
        parent.push(old_to_new[table.parent[old]]);
    }
    domain.types = TypeTable { names, parent };
    for c in &mut domain.constants {
        c.ty = old_to_new[c.ty];
    }
    for p in &mut domain.predicates {
        for v in &mut p.params {
            v.ty = old_to_new[v.ty];
        }
    }
    for s in &mut domain.schemas {
        for v in &mut s.params {
            v.ty = old_to_new[v.ty];
        }
    }
}

pub fn parse_domain(text: &str) -> Result<Domain, ParseError> {
    let top = read_single(text, "domain")?;
    let (items, pos) = list(&top, "a `(define ...)` form")?;
    match items.first() {
        Some(Sexpr::Atom(h, _)) if h == "define" => {}
        _ => return Err(syntax(pos, "expected `(define (domain ...) ...)`")),
    }
    let (head, hpos) = list(
        items.get(1).ok_or_else(|| syntax(pos, "missing `(domain name)`"))?,
        "`(domain name)`",
    )?;
    match head.first() {
        Some(Sexpr::Atom(h, _)) if h == "domain" => {}
        _ => return Err(syntax(hpos, "expected `(domain name)`")),
    }
    let (dname, _) = atom(head.get(1).ok_or_else(|| syntax(hpos, "domain needs a name"))?, "a domain name")?;

    let mut domain = Domain {
        name: dname.to_string(),
        requirements: Vec::new(),
        types: TypeTable::default(),
        predicates: Vec::new(),
        constants: Vec::new(),
        schemas: Vec::new(),
    };

    for block in &items[2..] {
        let (bitems, bpos) = list(block, "a domain section")?;
        let (key, kpos) = match bitems.first() {
            Some(s) => atom(s, "a section keyword")?,
            None => return Err(syntax(bpos, "empty domain section")),
        };
        match key {
            ":requirements" => {
                for r in &bitems[1..] {
                    let (req, rpos) = atom(r, "a requirement")?;
                    if !SUPPORTED_REQUIREMENTS.contains(&req) {
                        return Err(unsupported(rpos, format!("requirement `{}`", req)));
                    }
                    domain.requirements.push(req.to_string());
                }
            }
            ":types" => {
                for (name, parent, npos) in parse_typed_list(&bitems[1..], "object")? {
                    if name == "object" {
                        return Err(semantics(npos, "cannot redeclare type `object`"));
                    }
                    let pid = domain.types.insert(&parent);
                    let tid = domain.types.insert(&name);
                    domain.types.parent[tid] = pid;
                }
            }
            ":constants" => {
                for (name, tyname, npos) in parse_typed_list(&bitems[1..], "object")? {
                    if domain.constants.iter().any(|c| c.name == name) {
                        return Err(semantics(npos, format!("duplicate constant `{}`", name)));
                    }
                    let ty = domain
                        .types
                        .id_of(&tyname)
                        .ok_or_else(|| semantics(npos, format!("unknown type `{}`", tyname)))?;
                    domain.constants.push(TypedName { name, ty });
                }
            }
            ":predicates" => {
                for p in &bitems[1..] {
                    let (pitems, ppos) = list(p, "a predicate declaration")?;
                    let (pname, _) = match pitems.first() {
                        Some(s) => atom(s, "a predicate name")?,
                        None => return Err(syntax(ppos, "empty predicate declaration")),
                    };
                    if domain.predicates.iter().any(|q| q.name == pname) {
                        return Err(semantics(ppos, format!("duplicate predicate `{}`", pname)));
                    }
                    let mut params = Vec::new();
                    for (vname, tyname, vpos) in parse_typed_list(&pitems[1..], "object")? {
                        if !vname.starts_with('?') {
                            return Err(syntax(vpos, format!("parameter `{}` must start with `?`", vname)));
                        }
                        if params.iter().any(|v: &TypedVar| v.name == vname) {
                            return Err(semantics(vpos, format!("duplicate parameter `{}`", vname)));
                        }
                        let ty = domain
                            .types
                            .id_of(&tyname)
                            .ok_or_else(|| semantics(vpos, format!("unknown type `{}`", tyname)))?;
                        params.push(TypedVar { name: vname, ty });
                    }
                    domain.predicates.push(PredicateDecl { name: pname.to_string(), params });
                }
            }
            ":action" => {
                let schema =
                    parse_action(bitems, bpos, &domain.predicates, &mut domain.types, &domain.constants)?;
                if domain.schemas.iter().any(|s| s.name == schema.name) {
                    return Err(semantics(bpos, format!("duplicate action `{}`", schema.name)));
                }
                domain.schemas.push(schema);
            }
            ":functions" | ":derived" | ":durative-action" => {
                return Err(unsupported(kpos, format!("section `{}`", key)));
            }
            _ => return Err(unsupported(kpos, format!("section `{}`", key))),
        }
    }
    canonicalize_types(&mut domain);
    Ok(domain)
}

fn parse_ground_atom(
    items: &[Sexpr],
    pos: SrcPos,
    domain: &Domain,
    objects: &[TypedName],
) -> Result<GroundAtom, ParseError> {
    let (pname, ppos) = atom(&items[0], "a predicate name")?;
    let pred = domain
        .predicate_id(pname)
        .ok_or_else(|| semantics(ppos, format!("unknown predicate `{}`", pname)))?;
    let decl = &domain.predicates[pred];
    if items.len() - 1 != decl.arity() {
        return Err(semantics(
            pos,
            format!("predicate `{}` expects {} arguments, got {}", pname, decl.arity(), items.len() - 1),
        ));
    }
    let mut args = Vec::with_capacity(decl.arity());
    for (k, item) in items[1..].iter().enumerate() {
        let (oname, opos) = atom(item, "an object name")?;
        let obj = objects
            .iter()
            .find(|o| o.name == oname)
            .or_else(|| domain.constants.iter().find(|c| c.name == oname))
            .ok_or_else(|| semantics(opos, format!("undeclared object `{}`", oname)))?;
        if !domain.types.is_subtype(obj.ty, decl.params[k].ty) {
            return Err(semantics(
                opos,
                format!("object `{}` has the wrong type for `{}`", oname, pname),
            ));
        }
        args.push(oname.to_string());
    }
    Ok(GroundAtom { pred, args })
}

pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem, ParseError> {
    let top = read_single(text, "problem")?;
    let (items, pos) = list(&top, "a `(define ...)` form")?;
    match items.first() {
        Some(Sexpr::Atom(h, _)) if h == "define" => {}
        _ => return Err(syntax(pos, "expected `(define (problem ...) ...)`")),
    }
    let (head, hpos) = list(
        items.get(1).ok_or_else(|| syntax(pos, "missing `(problem name)`"))?,
        "`(problem name)`",
    )?;
    match head.first() {
        Some(Sexpr::Atom(h, _)) if h == "problem" => {}
        _ => return Err(syntax(hpos, "expected `(problem name)`")),
    }
    let (pname, _) =
        atom(head.get(1).ok_or_else(|| syntax(hpos, "problem needs a name"))?, "a problem name")?;

    let mut problem = Problem {
        name: pname.to_string(),
        domain_name: String::new(),
        objects: Vec::new(),
        init: Vec::new(),
        goal: Vec::new(),
    };

    for block in &items[2..] {
        let (bitems, bpos) = list(block, "a problem section")?;
        let (key, kpos) = match bitems.first() {
            Some(s) => atom(s, "a section keyword")?,
            None => return Err(syntax(bpos, "empty problem section")),
        };
        match key {
            ":domain" => {
                let (dname, dpos) =
                    atom(bitems.get(1).ok_or_else(|| syntax(bpos, ":domain needs a name"))?, "a domain name")?;
                if dname != domain.name {
                    return Err(semantics(
                        dpos,
                        format!("problem is for domain `{}` but `{}` was given", dname, domain.name),
                    ));
                }
                problem.domain_name = dname.to_string();
            }
            ":objects" => {
                for (name, tyname, npos) in parse_typed_list(&bitems[1..], "object")? {
                    if problem.objects.iter().any(|o| o.name == name)
                        || domain.constants.iter().any(|c| c.name == name)
                    {
                        return Err(semantics(npos, format!("duplicate object `{}`", name)));
                    }
                    let ty = domain
                        .types
                        .id_of(&tyname)
                        .ok_or_else(|| semantics(npos, format!("unknown type `{}`", tyname)))?;
                    problem.objects.push(TypedName { name, ty });
                }
            }
            ":init" => {
                for a in &bitems[1..] {
                    let (aitems, apos) = list(a, "an init atom")?;
                    if aitems.is_empty() {
                        return Err(syntax(apos, "empty init atom"));
                    }
                    if let Sexpr::Atom(h, hpos) = &aitems[0] {
                        if h == "=" || h == "probabilistic" {
                            return Err(unsupported(*hpos, format!("`{}` in :init", h)));
                        }
                    }
                    let atom = parse_ground_atom(aitems, apos, domain, &problem.objects)?;
                    if !problem.init.contains(&atom) {
                        problem.init.push(atom);
                    }
                }
            }
            ":goal" => {
                let value = bitems.get(1).ok_or_else(|| syntax(bpos, ":goal needs a formula"))?;
                let (gitems, gpos) = list(value, "a goal formula")?;
                let conjuncts: Vec<&Sexpr> = match gitems.first() {
                    Some(Sexpr::Atom(h, _)) if h == "and" => gitems[1..].iter().collect(),
                    None => Vec::new(),
                    _ => vec![value],
                };
                for c in conjuncts {
                    let (citems, cpos) = list(c, "a goal literal")?;
                    if citems.is_empty() {
                        return Err(syntax(cpos, "empty goal literal"));
                    }
                    if let Sexpr::Atom(h, hpos) = &citems[0] {
                        if h == "not" {
                            return Err(unsupported(*hpos, "negative goal literal"));
                        }
                        if ["or", "imply", "exists", "forall"].contains(&h.as_str()) {
                            return Err(unsupported(*hpos, format!("`{}` in goal", h)));
                        }
                    }
                    let atom = parse_ground_atom(citems, cpos, domain, &problem.objects)?;
                    if !problem.goal.contains(&atom) {
                        problem.goal.push(atom);
                    }
                }
                let _ = gpos;
            }
            ":metric" | ":constraints" => return Err(unsupported(kpos, format!("section `{}`", key))),
            _ => return Err(unsupported(kpos, format!("section `{}`", key))),
        }
    }
    if problem.domain_name.is_empty() {
        return Err(syntax(pos, "problem is missing a `(:domain ...)` section"));
    }
    Ok(problem)
}
