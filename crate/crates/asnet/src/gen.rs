//! Benchmark problem generators. Each generator emits a PPDDL domain and
//! problem pair as text; output is a pure function of (kind, size, seed).

use rand::seq::SliceRandom;
use rand::Rng;
use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    /// Triangular road grid where every move risks a flat tire and spares
    /// sit only along the long outer route.
    Ttw,
    /// Pizza delivery through a chain of toll booths whose unpaid operators
    /// crush the truck on the way back half the time.
    Cosanostra,
    /// Blocks world where picking up or stacking drops the block onto the
    /// table with probability 0.25.
    Pbw,
    /// Two equally long corridors, a monster hidden at the end of one; only
    /// a deep enough receptive field can tell which.
    Monster,
}

impl DomainKind {
    pub fn parse(s: &str) -> Option<DomainKind> {
        match s {
            "ttw" => Some(DomainKind::Ttw),
            "cosanostra" => Some(DomainKind::Cosanostra),
            "pbw" => Some(DomainKind::Pbw),
            "monster" => Some(DomainKind::Monster),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Ttw => "ttw",
            DomainKind::Cosanostra => "cosanostra",
            DomainKind::Pbw => "pbw",
            DomainKind::Monster => "monster",
        }
    }
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Generate (domain text, problem text). `seed` only matters for the
/// randomized blocks-world instances.
pub fn generate(kind: DomainKind, size: usize, seed: u64) -> (String, String) {
    assert!(size >= 1, "size must be positive");
    match kind {
        DomainKind::Ttw => (ttw_domain(), ttw_problem(size)),
        DomainKind::Cosanostra => (cosanostra_domain(), cosanostra_problem(size)),
        DomainKind::Pbw => (pbw_domain(), pbw_problem(size, seed)),
        DomainKind::Monster => (monster_domain(), monster_problem(size)),
    }
}

/// Default problem file name for one instance.
pub fn problem_file_name(kind: DomainKind, size: usize, seed: u64) -> String {
    match kind {
        DomainKind::Pbw => format!("{}-{}-s{}.pddl", kind.name(), size, seed),
        _ => format!("{}-{}.pddl", kind.name(), size),
    }
}

// --- Triangle Tire World ---------------------------------------------------
//
// Cells l-i-j for i in 1..=2n+1, j in 1..=2n+2-i: (n+1)(2n+1) locations.
// One-way roads: up the first column, rightward along each row, and up-left
// from every cell off the first column. The start is l-1-1, the goal
// l-1-(2n+1). Spare tires sit exactly on the interior stops of the long
// outer route (rightward along the bottom row, then up the hypotenuse), so
// that route can always recover from a flat while every shortcut risks
// stranding the vehicle.

fn ttw_domain() -> String {
    "(define (domain triangle-tire)
  (:requirements :typing :strips :probabilistic-effects)
  (:types location)
  (:predicates (vehicle-at ?loc - location)
               (spare-in ?loc - location)
               (road ?from - location ?to - location)
               (not-flattire))
  (:action move-car
    :parameters (?from - location ?to - location)
    :precondition (and (vehicle-at ?from) (road ?from ?to) (not-flattire))
    :effect (and (vehicle-at ?to) (not (vehicle-at ?from))
                 (probabilistic 0.5 (not (not-flattire)))))
  (:action changetire
    :parameters (?loc - location)
    :precondition (and (vehicle-at ?loc) (spare-in ?loc))
    :effect (and (not (spare-in ?loc)) (not-flattire))))
"
    .to_string()
}

fn ttw_problem(n: usize) -> String {
    let cols = 2 * n + 1;
    let cell = |i: usize, j: usize| format!("l-{}-{}", i, j);
    let height = |i: usize| 2 * n + 2 - i;
    let mut objects = Vec::new();
    for i in 1..=cols {
        for j in 1..=height(i) {
            objects.push(cell(i, j));
        }
    }
    let mut init = Vec::new();
    init.push(format!("(vehicle-at {})", cell(1, 1)));
    init.push("(not-flattire)".to_string());
    for j in 1..=2 * n {
        init.push(format!("(road {} {})", cell(1, j), cell(1, j + 1)));
    }
    for i in 1..=cols {
        for j in 1..=height(i) {
            if i + 1 <= cols && j <= height(i + 1) {
                init.push(format!("(road {} {})", cell(i, j), cell(i + 1, j)));
            }
            if i >= 2 {
                init.push(format!("(road {} {})", cell(i, j), cell(i - 1, j + 1)));
            }
        }
    }
    for i in 2..=cols {
        init.push(format!("(spare-in {})", cell(i, 1)));
    }
    for i in 2..=2 * n {
        init.push(format!("(spare-in {})", cell(i, 2 * n + 2 - i)));
    }
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem triangle-tire-{})", n);
    let _ = writeln!(out, "  (:domain triangle-tire)");
    let _ = writeln!(out, "  (:objects {} - location)", objects.join(" "));
    let _ = writeln!(out, "  (:init {})", init.join(" "));
    let _ = writeln!(out, "  (:goal (vehicle-at {})))", cell(1, cols));
    out
}

// --- CosaNostra Pizza ------------------------------------------------------
//
// A linear road shop <-> b1 <-> ... <-> bn <-> customer. Driving into an
// open location is safe; booths open permanently once their operator is
// paid; driving into a booth while carrying the pizza is tolerated; driving
// into an unpaid booth empty-handed gets the truck crushed half the time.
// The optimal round trip loads, pays each booth on the way out, delivers,
// and returns through the now-open booths: 3n+4 actions, deterministic.

fn cosanostra_domain() -> String {
    "(define (domain cosanostra)
  (:requirements :typing :strips :probabilistic-effects)
  (:types booth - location)
  (:predicates (truck-at ?loc - location)
               (road ?from - location ?to - location)
               (open ?loc - location)
               (pizza-at ?loc - location)
               (pizza-due ?loc - location)
               (have-pizza)
               (delivered ?loc - location))
  (:action load-pizza
    :parameters (?loc - location)
    :precondition (and (truck-at ?loc) (pizza-at ?loc))
    :effect (and (not (pizza-at ?loc)) (have-pizza)))
  (:action unload-pizza
    :parameters (?loc - location)
    :precondition (and (truck-at ?loc) (pizza-due ?loc) (have-pizza))
    :effect (and (not (have-pizza)) (delivered ?loc)))
  (:action pay-operator
    :parameters (?booth - booth)
    :precondition (and (truck-at ?booth))
    :effect (and (open ?booth)))
  (:action drive-open
    :parameters (?from - location ?to - location)
    :precondition (and (truck-at ?from) (road ?from ?to) (open ?to))
    :effect (and (truck-at ?to) (not (truck-at ?from))))
  (:action drive-loaded
    :parameters (?from - location ?to - booth)
    :precondition (and (truck-at ?from) (road ?from ?to) (have-pizza))
    :effect (and (truck-at ?to) (not (truck-at ?from))))
  (:action drive-risky
    :parameters (?from - location ?to - booth)
    :precondition (and (truck-at ?from) (road ?from ?to))
    :effect (and (not (truck-at ?from)) (probabilistic 0.5 (truck-at ?to)))))
"
    .to_string()
}

fn cosanostra_problem(n: usize) -> String {
    let booth = |k: usize| format!("b{}", k);
    let stops: Vec<String> = std::iter::once("shop".to_string())
        .chain((1..=n).map(booth))
        .chain(std::iter::once("customer".to_string()))
        .collect();
    let mut init = vec![
        "(truck-at shop)".to_string(),
        "(pizza-at shop)".to_string(),
        "(pizza-due customer)".to_string(),
        "(open shop)".to_string(),
        "(open customer)".to_string(),
    ];
    for w in stops.windows(2) {
        init.push(format!("(road {} {})", w[0], w[1]));
        init.push(format!("(road {} {})", w[1], w[0]));
    }
    // Booths are declared customer-end first so that action-index tie
    // breaking never encodes the way home; a policy that cannot tell the
    // directions apart has to earn the return trip.
    let booths: Vec<String> = (1..=n).rev().map(booth).collect();
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem cosanostra-{})", n);
    let _ = writeln!(out, "  (:domain cosanostra)");
    let _ = writeln!(
        out,
        "  (:objects shop customer - location {} - booth)",
        booths.join(" ")
    );
    let _ = writeln!(out, "  (:init {})", init.join(" "));
    let _ = writeln!(out, "  (:goal (and (delivered customer) (truck-at shop))))");
    out
}

// --- Probabilistic Blocks World --------------------------------------------

fn pbw_domain() -> String {
    "(define (domain prob-blocks)
  (:requirements :typing :equality :probabilistic-effects)
  (:types block)
  (:predicates (on ?a - block ?b - block)
               (ontable ?b - block)
               (clear ?b - block)
               (holding ?b - block)
               (handempty))
  (:action pick-up
    :parameters (?b - block)
    :precondition (and (clear ?b) (ontable ?b) (handempty))
    :effect (probabilistic 0.75 (and (holding ?b) (not (ontable ?b))
                                     (not (clear ?b)) (not (handempty)))))
  (:action unstack
    :parameters (?a - block ?b - block)
    :precondition (and (on ?a ?b) (clear ?a) (handempty) (not (= ?a ?b)))
    :effect (and (not (on ?a ?b)) (clear ?b)
                 (probabilistic 0.75 (and (holding ?a) (not (clear ?a)) (not (handempty)))
                                0.25 (and (ontable ?a)))))
  (:action put-down
    :parameters (?b - block)
    :precondition (and (holding ?b))
    :effect (and (not (holding ?b)) (ontable ?b) (clear ?b) (handempty)))
  (:action stack
    :parameters (?a - block ?b - block)
    :precondition (and (holding ?a) (clear ?b) (not (= ?a ?b)))
    :effect (and (not (holding ?a)) (clear ?a) (handempty)
                 (probabilistic 0.75 (and (on ?a ?b) (not (clear ?b)))
                                0.25 (and (ontable ?a))))))
"
    .to_string()
}

/// Random tower configuration: a uniform shuffle split into towers with a
/// fresh coin per block (heads starts a new tower), giving geometrically
/// distributed heights.
fn random_towers(blocks: &[String], rng: &mut impl Rng) -> Vec<Vec<String>> {
    let mut order: Vec<String> = blocks.to_vec();
    order.shuffle(rng);
    let mut towers: Vec<Vec<String>> = Vec::new();
    for b in order {
        if towers.is_empty() || rng.gen_bool(0.5) {
            towers.push(vec![b]);
        } else {
            towers.last_mut().unwrap().push(b);
        }
    }
    towers
}

fn tower_literals(towers: &[Vec<String>], with_clear: bool) -> Vec<String> {
    let mut lits = Vec::new();
    for tower in towers {
        lits.push(format!("(ontable {})", tower[0]));
        for w in tower.windows(2) {
            lits.push(format!("(on {} {})", w[1], w[0]));
        }
        if with_clear {
            lits.push(format!("(clear {})", tower.last().unwrap()));
        }
    }
    lits
}

fn pbw_problem(n: usize, seed: u64) -> String {
    let blocks: Vec<String> = (1..=n).map(|k| format!("b{}", k)).collect();
    let mut rng = crate::rng::stream(seed, &[crate::rng::tag("pbw"), n as u64]);
    let init_towers = random_towers(&blocks, &mut rng);
    let goal_towers = random_towers(&blocks, &mut rng);
    let mut init = tower_literals(&init_towers, true);
    init.push("(handempty)".to_string());
    let goal = tower_literals(&goal_towers, false);
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem prob-blocks-{}-s{})", n, seed);
    let _ = writeln!(out, "  (:domain prob-blocks)");
    let _ = writeln!(out, "  (:objects {} - block)", blocks.join(" "));
    let _ = writeln!(out, "  (:init {})", init.join(" "));
    let _ = writeln!(out, "  (:goal (and {})))", goal.join(" "));
    out
}

// --- Monster ---------------------------------------------------------------
//
// Two corridors of equal length from start to finish; a first forced action
// releases the monster into one of the two final corridor cells with equal
// probability (also marking the other one safe). Movement is two-phase:
// every move consumes the move token and arriving somewhere other than the
// finish means either stepping on from a safe cell or confronting the
// monster, which kills with probability 0.99. Whether the far end of a
// corridor is safe is therefore only visible along the corridor itself.

fn monster_domain() -> String {
    "(define (domain monster)
  (:requirements :typing :equality :probabilistic-effects)
  (:types lair - location)
  (:predicates (at ?loc - location)
               (road ?from - location ?to - location)
               (safe ?loc - location)
               (monster-at ?loc - lair)
               (can-move)
               (unplaced))
  (:action release-monster
    :parameters (?a - lair ?b - lair)
    :precondition (and (unplaced) (not (= ?a ?b)))
    :effect (and (not (unplaced)) (can-move)
                 (probabilistic 0.5 (and (monster-at ?a) (safe ?b))
                                0.5 (and (monster-at ?b) (safe ?a)))))
  (:action move
    :parameters (?from - location ?to - location)
    :precondition (and (at ?from) (road ?from ?to) (can-move))
    :effect (and (at ?to) (not (at ?from)) (not (can-move))))
  (:action proceed
    :parameters (?loc - location)
    :precondition (and (at ?loc) (safe ?loc))
    :effect (and (can-move)))
  (:action confront
    :parameters (?loc - lair)
    :precondition (and (at ?loc) (monster-at ?loc))
    :effect (probabilistic 0.99 (and (not (at ?loc)))
                           0.01 (and (can-move)))))
"
    .to_string()
}

fn monster_problem(n: usize) -> String {
    let mut objects_plain = vec!["start".to_string(), "finish".to_string()];
    let mut lairs = Vec::new();
    let cell = |side: &str, k: usize| format!("{}-{}", side, k);
    for side in ["left", "right"] {
        for k in 1..n {
            objects_plain.push(cell(side, k));
        }
        lairs.push(cell(side, n));
    }
    let mut init = vec!["(at start)".to_string(), "(unplaced)".to_string()];
    for side in ["left", "right"] {
        let mut prev = "start".to_string();
        for k in 1..=n {
            init.push(format!("(road {} {})", prev, cell(side, k)));
            prev = cell(side, k);
        }
        init.push(format!("(road {} finish)", prev));
        for k in 1..n {
            init.push(format!("(safe {})", cell(side, k)));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem monster-{})", n);
    let _ = writeln!(out, "  (:domain monster)");
    let _ = writeln!(
        out,
        "  (:objects {} - location {} - lair)",
        objects_plain.join(" "),
        lairs.join(" ")
    );
    let _ = writeln!(out, "  (:init {})", init.join(" "));
    let _ = writeln!(out, "  (:goal (at finish)))");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::{ground, GroundTask};
    use crate::heur::{determinize_relax, hmax};
    use crate::ppddl::{parse_domain, parse_problem, print_domain, print_problem};
    use crate::ssp::{self, Outcome, State};
    use crate::teacher::{greedy_action, q_labels, q_value_ref, value_iteration};

    fn build(kind: DomainKind, size: usize, seed: u64) -> GroundTask {
        let (dt, pt) = generate(kind, size, seed);
        let d = parse_domain(&dt).unwrap();
        let p = parse_problem(&pt, &d).unwrap();
        ground(&d, &p).unwrap()
    }

    #[test]
    fn generators_are_deterministic_and_round_trip() {
        for (kind, size) in [
            (DomainKind::Ttw, 1),
            (DomainKind::Cosanostra, 2),
            (DomainKind::Pbw, 4),
            (DomainKind::Monster, 2),
        ] {
            let (d1, p1) = generate(kind, size, 3);
            let (d2, p2) = generate(kind, size, 3);
            assert_eq!(d1, d2);
            assert_eq!(p1, p2);
            let d = parse_domain(&d1).unwrap();
            let p = parse_problem(&p1, &d).unwrap();
            let d_rt = parse_domain(&print_domain(&d)).unwrap();
            let p_rt = parse_problem(&print_problem(&p, &d), &d_rt).unwrap();
            assert_eq!(d, d_rt);
            assert_eq!(p, p_rt);
        }
        let (_, pa) = generate(DomainKind::Pbw, 5, 1);
        let (_, pb) = generate(DomainKind::Pbw, 5, 2);
        assert_ne!(pa, pb, "different seeds give different blocks instances");
    }

    #[test]
    fn ttw_size_one_has_six_locations() {
        let task = build(DomainKind::Ttw, 1, 0);
        let locations =
            task.props.iter().filter(|p| p.name.starts_with("vehicle-at")).count();
        assert_eq!(locations, 6);
        // (n+1)(2n+1) in general.
        let task3 = build(DomainKind::Ttw, 3, 0);
        let locations3 =
            task3.props.iter().filter(|p| p.name.starts_with("vehicle-at")).count();
        assert_eq!(locations3, 4 * 7);
    }

    #[test]
    fn ttw_move_has_a_half_chance_of_a_flat() {
        let task = build(DomainKind::Ttw, 1, 0);
        let a = task
            .actions
            .iter()
            .position(|a| a.name == "move-car(l-1-1,l-2-1)")
            .unwrap() as u32;
        let succ = ssp::successors(&task, &task.s0, a).unwrap();
        assert_eq!(succ.len(), 2);
        assert!(succ.iter().all(|(p, _)| (*p - 0.5).abs() < 1e-12));
    }

    #[test]
    fn ttw_optimal_policy_takes_the_outer_edge() {
        let task = build(DomainKind::Ttw, 1, 0);
        let vt = value_iteration(&task, 1e-6, 500.0, 100_000).unwrap();
        // Outer route: 4 moves, a flat on each arrival except the goal needs
        // a change: 4 + 0.5 * 3.
        assert!((vt.value(&task.s0) - 5.5).abs() < 1e-6, "V(s0) = {}", vt.value(&task.s0));
        let outer = task.actions.iter().position(|a| a.name == "move-car(l-1-1,l-2-1)").unwrap();
        let direct = task.actions.iter().position(|a| a.name == "move-car(l-1-1,l-1-2)").unwrap();
        let q_outer = q_value_ref(&task, &vt, &task.s0, outer as u32);
        let q_direct = q_value_ref(&task, &vt, &task.s0, direct as u32);
        assert!(
            q_outer < q_direct,
            "outer-edge move must beat the short route: {} vs {}",
            q_outer,
            q_direct
        );
        assert_eq!(greedy_action(&task, &vt, &task.s0), Some(outer as u32));
    }

    #[test]
    fn cosanostra_optimal_cost_is_3n_plus_4() {
        for n in 1..=6usize {
            let task = build(DomainKind::Cosanostra, n, 0);
            let vt = value_iteration(&task, 1e-6, 500.0, 200_000).unwrap();
            let expect = (3 * n + 4) as f64;
            assert!(
                (vt.value(&task.s0) - expect).abs() < 1e-6,
                "n={}: V(s0)={} expected {}",
                n,
                vt.value(&task.s0),
                expect
            );
        }
    }

    #[test]
    fn cosanostra_greedy_run_is_deterministic_with_cost_seven() {
        let task = build(DomainKind::Cosanostra, 1, 0);
        let vt = value_iteration(&task, 1e-6, 500.0, 100_000).unwrap();
        let mut rng = crate::rng::stream(5, &[]);
        let traj = ssp::run_policy(
            &task,
            |s, _| greedy_action(&task, &vt, s).ok_or_else(|| "no action".into()),
            &mut rng,
            300,
        )
        .unwrap();
        assert_eq!(traj.outcome, Outcome::Goal);
        assert_eq!(traj.total_cost(), 7.0);
    }

    #[test]
    fn cosanostra_pay_is_the_unique_optimum_at_a_booth_with_pizza() {
        let task = build(DomainKind::Cosanostra, 2, 0);
        let vt = value_iteration(&task, 1e-6, 500.0, 100_000).unwrap();
        // Walk the optimal trajectory; whenever the truck is at an unpaid
        // booth carrying the pizza, the label vector is exactly {pay}.
        let mut s = task.s0.clone();
        let mut rng = crate::rng::stream(6, &[]);
        let mut checked = 0;
        for _ in 0..40 {
            if ssp::is_goal(&task, &s) {
                break;
            }
            let a = greedy_action(&task, &vt, &s).unwrap();
            if task.actions[a as usize].name.starts_with("pay-operator") {
                let y = q_labels(&task, &vt, &s);
                for (k, label) in y.iter().enumerate() {
                    let is_pay = k == a as usize;
                    assert_eq!(*label == 1.0, is_pay, "action {}", task.actions[k].name);
                }
                checked += 1;
            }
            let (next, _) = ssp::sample_transition(&task, &s, a, &mut rng).unwrap();
            s = next;
        }
        assert_eq!(checked, 2, "optimal route pays each booth once");
    }

    #[test]
    fn cosanostra_never_paying_survives_about_two_to_the_minus_n() {
        let n = 6;
        let (dt, pt) = generate(DomainKind::Cosanostra, n, 0);
        // Make paying prohibitively expensive, solve, and execute that
        // never-pay policy on the ordinary task (same grounding order).
        let expensive = dt.replace(
            ":precondition (and (truck-at ?booth))
    :effect (and (open ?booth))",
            ":precondition (and (truck-at ?booth))
    :effect (and (open ?booth))
    :action-cost 10000",
        );
        assert_ne!(dt, expensive);
        let d_cheap = parse_domain(&dt).unwrap();
        let d_dear = parse_domain(&expensive).unwrap();
        let p_cheap = parse_problem(&pt, &d_cheap).unwrap();
        let p_dear = parse_problem(&pt, &d_dear).unwrap();
        let task = ground(&d_cheap, &p_cheap).unwrap();
        let dear = ground(&d_dear, &p_dear).unwrap();
        let vt = value_iteration(&dear, 1e-6, 20000.0, 200_000).unwrap();
        let trials = 10_000;
        let mut wins = 0;
        for t in 0..trials {
            let mut rng = crate::rng::stream(17, &[t]);
            let traj = ssp::run_policy(
                &task,
                |s, _| greedy_action(&dear, &vt, s).ok_or_else(|| "no action".into()),
                &mut rng,
                300,
            )
            .unwrap();
            if traj.outcome == Outcome::Goal {
                assert!(!traj
                    .actions
                    .iter()
                    .any(|&a| task.actions[a as usize].name.starts_with("pay-operator")));
                wins += 1;
            }
        }
        // 0.5^6 = 1.5625%: ~156 of 10000, allow generous sampling noise.
        assert!((100..=230).contains(&wins), "never-pay survived {wins}/10000 runs");
    }

    #[test]
    fn pbw_instances_ground_with_valid_goals() {
        let task = build(DomainKind::Pbw, 5, 11);
        let blocks: std::collections::HashSet<&str> = task
            .props
            .iter()
            .filter(|p| p.name.starts_with("ontable("))
            .map(|p| p.name.trim_start_matches("ontable(").trim_end_matches(')'))
            .collect();
        assert_eq!(blocks.len(), 5);
        // Goal mentions each block exactly once as subject: a real
        // configuration, not a partial scatter.
        let mut subjects = Vec::new();
        for &g in &task.goal {
            let name = &task.props[g as usize].name;
            let inner = name.split('(').nth(1).unwrap().trim_end_matches(')');
            subjects.push(inner.split(',').next().unwrap().to_string());
        }
        subjects.sort();
        subjects.dedup();
        assert_eq!(subjects.len(), 5);
    }

    #[test]
    fn pbw_pickup_semantics() {
        // Seed 7 at n=3 starts with at least one block directly on the table.
        let task = build(DomainKind::Pbw, 3, 7);
        let pick = *ssp::applicable(&task, &task.s0)
            .iter()
            .find(|&&a| task.actions[a as usize].name.starts_with("pick-up("))
            .expect("some block sits on the table initially");
        let succ = ssp::successors(&task, &task.s0, pick).unwrap();
        assert_eq!(succ.len(), 2);
        assert!(succ.iter().any(|(p, _)| (*p - 0.75).abs() < 1e-12));
        assert!(succ.iter().any(|(p, s)| (*p - 0.25).abs() < 1e-12 && *s == task.s0));
        // While holding the block, neither pick-up nor unstack applies.
        let held = succ.iter().find(|(p, _)| (*p - 0.75).abs() < 1e-12).unwrap().1.clone();
        for a in ssp::applicable(&task, &held) {
            let name = &task.actions[a as usize].name;
            assert!(!name.starts_with("pick-up(") && !name.starts_with("unstack("));
        }
    }

    #[test]
    fn pbw_has_no_dead_ends_on_sampled_walks() {
        let task = build(DomainKind::Pbw, 4, 3);
        let mut rng = crate::rng::stream(8, &[]);
        let traj = ssp::run_policy(
            &task,
            |s, rng| {
                let acts = ssp::applicable(&task, s);
                assert!(!acts.is_empty());
                Ok(acts[rng.gen_range(0..acts.len())])
            },
            &mut rng,
            200,
        )
        .unwrap();
        assert_ne!(traj.outcome, Outcome::DeadEnd);
    }

    #[test]
    fn monster_optimal_value_is_2n_plus_2() {
        for n in 1..=3usize {
            let task = build(DomainKind::Monster, n, 0);
            let vt = value_iteration(&task, 1e-6, 500.0, 100_000).unwrap();
            let expect = (2 * n + 2) as f64;
            assert!(
                (vt.value(&task.s0) - expect).abs() < 1e-6,
                "n={}: V={} expected {}",
                n,
                vt.value(&task.s0),
                expect
            );
        }
    }

    #[test]
    fn monster_release_is_forced_first() {
        let task = build(DomainKind::Monster, 2, 0);
        let acts = ssp::applicable(&task, &task.s0);
        assert!(!acts.is_empty());
        assert!(acts
            .iter()
            .all(|&a| task.actions[a as usize].name.starts_with("release-monster")));
    }

    #[test]
    fn monster_first_moves_are_indistinguishable_to_a_shallow_net() {
        use crate::features::input_features;
        use crate::ground::FeatureMode;
        use crate::model::{Fingerprint, NetworkInstance, Weights};
        let n = 3;
        let (dt, pt) = generate(DomainKind::Monster, n, 0);
        let d = parse_domain(&dt).unwrap();
        let p = parse_problem(&pt, &d).unwrap();
        let task = ground(&d, &p).unwrap();
        // Place the monster on the left.
        let release = ssp::applicable(&task, &task.s0)[0];
        let succ = ssp::successors(&task, &task.s0, release).unwrap();
        let left_lair = task
            .props
            .iter()
            .position(|pr| pr.name == format!("monster-at(left-{})", n))
            .unwrap() as u32;
        let placed = succ.iter().find(|(_, s)| s.get(left_lair)).map(|(_, s)| s.clone()).unwrap();

        let w = Weights::init(
            Fingerprint::from_domain(&d),
            crate::model::Hyper { prop_layers: 1, hidden_dim: 8, mode: FeatureMode::LmCut },
            42,
        );
        let rt = determinize_relax(&task);
        let feats = input_features(&task, &rt, &placed, FeatureMode::LmCut);
        let enabled = ssp::enabled_mask(&task, &placed);
        let mut net = NetworkInstance::new(&task, &w).unwrap();
        let pi = net.forward(&w, &feats.data, &enabled, None).unwrap();
        let ml = task.actions.iter().position(|a| a.name == "move(start,left-1)").unwrap();
        let mr = task.actions.iter().position(|a| a.name == "move(start,right-1)").unwrap();
        assert!(enabled[ml] && enabled[mr]);
        assert_eq!(pi[ml], pi[mr], "one proposition layer cannot see the lair from the start");
    }

    #[test]
    fn relaxed_goal_is_reachable_in_all_generated_instances() {
        for (kind, sizes) in [
            (DomainKind::Ttw, vec![1, 2]),
            (DomainKind::Cosanostra, vec![1, 3]),
            (DomainKind::Pbw, vec![3, 5]),
            (DomainKind::Monster, vec![1, 3]),
        ] {
            for size in sizes {
                let task = build(kind, size, 5);
                let rt = determinize_relax(&task);
                let h = hmax(&rt, &task.s0);
                assert!(h.is_finite(), "{} size {}: relaxed goal unreachable", kind, size);
            }
        }
    }

    #[test]
    fn cosanostra_crushed_truck_is_a_dead_end() {
        let task = build(DomainKind::Cosanostra, 1, 0);
        // Drive unpaid into the booth until the crush outcome fires.
        let risky = task
            .actions
            .iter()
            .position(|a| a.name == "drive-risky(shop,b1)")
            .unwrap() as u32;
        let succ = ssp::successors(&task, &task.s0, risky).unwrap();
        let crushed = succ
            .iter()
            .find(|(_, s)| !task.props.iter().enumerate().any(|(i, p)| p.name.starts_with("truck-at") && s.get(i as u32)))
            .map(|(_, s)| s.clone())
            .expect("one outcome leaves the truck nowhere");
        assert!(ssp::is_dead_end(&task, &crushed));
        assert!(!ssp::is_goal(&task, &crushed));
    }

    #[test]
    fn state_from_indices_helper_matches_init(){
        let task = build(DomainKind::Ttw, 1, 0);
        let trues: Vec<u32> = task.s0.ones().collect();
        assert_eq!(State::from_indices(task.prop_count(), &trues), task.s0);
    }
}
