//! Acceptance suite: one test per criterion, each printing a PASS line and
//! asserting its tolerances and runtime budget. Heavy trained artifacts are
//! shared between criteria through lazily-computed statics, and all
//! criteria serialize on one lock so runtime budgets are measured without
//! CPU contention.

use asnet::eval::{evaluate, EvalReport};
use asnet::features::input_features;
use asnet::gen::{generate, DomainKind};
use asnet::ground::{ground, FeatureMode, GroundTask};
use asnet::heur::{determinize_relax, hadd, hmax, lmcut, oracle};
use asnet::model::{check, Fingerprint, Hyper, NetworkInstance, Weights};
use asnet::ppddl::{parse_domain, parse_problem, Domain, Problem};
use asnet::rng::stream;
use asnet::ssp::{self, State};
use asnet::teacher::{lrtdp_solve, value_iteration, HeuristicKind};
use asnet::trainer::{train, TrainConfig};
use once_cell::sync::Lazy;
use std::sync::Mutex;
use std::time::Instant;

const SEED: u64 = 1;
const EVAL_SEED: u64 = 7;
const TRIALS: usize = 30;
const STEP_LIMIT: usize = 300;

static HEAVY: Mutex<()> = Mutex::new(());

fn guard() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn build(kind: DomainKind, size: usize, seed: u64) -> (Domain, Problem, GroundTask) {
    let (dt, pt) = generate(kind, size, seed);
    let d = parse_domain(&dt).expect("generated domain parses");
    let p = parse_problem(&pt, &d).expect("generated problem parses");
    let task = ground(&d, &p).expect("generated problem grounds");
    (d, p, task)
}

fn train_net(
    kind: DomainKind,
    sizes: &[usize],
    instance_seed: u64,
    cfg: TrainConfig,
) -> (Domain, Weights) {
    let (dt, _) = generate(kind, sizes[0], instance_seed);
    let domain = parse_domain(&dt).unwrap();
    let problems: Vec<(String, Problem)> = sizes
        .iter()
        .map(|&n| {
            let (_, pt) = generate(kind, n, instance_seed);
            (format!("{}-{}", kind.name(), n), parse_problem(&pt, &domain).unwrap())
        })
        .collect();
    let (weights, report) = train(&domain, &problems, cfg, |stats| {
        println!("  [{} train] {}", kind.name(), stats);
    })
    .expect("training succeeds");
    println!(
        "  [{} train] stopped: {:?} after {} epochs, {:.0}s",
        kind.name(),
        report.stop,
        report.epochs.len(),
        report.elapsed
    );
    (domain, weights)
}

fn eval_size(kind: DomainKind, size: usize, seed: u64, weights: &Weights) -> EvalReport {
    let (_, _, task) = build(kind, size, seed);
    evaluate(weights, &task, TRIALS, EVAL_SEED, STEP_LIMIT, None).expect("evaluation runs")
}

static CN_LM: Lazy<(Domain, Weights)> = Lazy::new(|| {
    train_net(
        DomainKind::Cosanostra,
        &[1, 2, 3, 4, 5],
        0,
        TrainConfig { time_limit: 1800.0, seed: SEED, ..TrainConfig::default() },
    )
});

static CN_NOLM: Lazy<(Domain, Weights)> = Lazy::new(|| {
    train_net(
        DomainKind::Cosanostra,
        &[1, 2, 3, 4, 5],
        0,
        TrainConfig {
            time_limit: 1800.0,
            seed: SEED,
            mode: FeatureMode::Plain,
            ..TrainConfig::default()
        },
    )
});

static TTW_NET: Lazy<(Domain, Weights)> = Lazy::new(|| {
    train_net(
        DomainKind::Ttw,
        &[1, 2, 3],
        0,
        TrainConfig { time_limit: 1800.0, seed: SEED, ..TrainConfig::default() },
    )
});

static MONSTER_NETS: Lazy<Vec<(usize, Domain, Weights)>> = Lazy::new(|| {
    (1..=3)
        .map(|depth| {
            let (domain, weights) = train_net(
                DomainKind::Monster,
                &[1, 2, 3, 4, 5],
                0,
                TrainConfig {
                    time_limit: 1800.0,
                    seed: SEED,
                    prop_layers: depth,
                    ..TrainConfig::default()
                },
            );
            (depth, domain, weights)
        })
        .collect()
});

static PBW_NET: Lazy<(Domain, Weights)> = Lazy::new(|| {
    train_net(
        DomainKind::Pbw,
        &[4, 5, 6],
        0,
        TrainConfig {
            time_limit: 1800.0,
            seed: SEED,
            heuristic: HeuristicKind::HAdd,
            ..TrainConfig::default()
        },
    )
});

/// Criterion 1: analytic gradients match central finite differences with
/// relative error below 1e-4 on a small task, dropout off, within 10 s.
#[test]
fn criterion_1_gradient_exactness() {
    let _g = guard();
    let t0 = Instant::now();
    let domain_text = "
(define (domain tiny)
  (:predicates (p) (q) (r))
  (:action go :parameters () :precondition (and (p)) :effect (and (q) (not (p))))
  (:action gamble :parameters () :precondition (and (p)) :effect (probabilistic 0.5 (r)))
  (:action finish :parameters () :precondition (and (q)) :effect (and (r))))";
    let d = parse_domain(domain_text).unwrap();
    let p =
        parse_problem("(define (problem t) (:domain tiny) (:init (p)) (:goal (r)))", &d).unwrap();
    let task = ground(&d, &p).unwrap();
    assert!(task.prop_count() <= 4 && task.action_count() <= 3);
    let weights = Weights::init(
        Fingerprint::from_domain(&d),
        Hyper { prop_layers: 1, hidden_dim: 4, mode: FeatureMode::LmCut },
        2024,
    );
    let rt = determinize_relax(&task);
    let prop = |name: &str| task.props.iter().position(|p| p.name == name).unwrap() as u32;
    let act = |name: &str| task.actions.iter().position(|a| a.name == name).unwrap();
    let mut batch = Vec::new();
    for (trues, labeled) in [
        (vec![prop("p")], vec![act("go")]),
        (vec![prop("q")], vec![act("finish")]),
        (vec![prop("p"), prop("q")], vec![act("gamble"), act("finish")]),
    ] {
        let s = State::from_indices(task.prop_count(), &trues);
        let feats = input_features(&task, &rt, &s, FeatureMode::LmCut);
        let enabled = ssp::enabled_mask(&task, &s);
        let mut labels = vec![0.0; task.action_count()];
        for a in labeled {
            labels[a] = 1.0;
        }
        batch.push(check::CheckItem { feats, enabled, labels });
    }
    let err = check::finite_difference_max_rel_err(&task, &weights, &batch, 1e-3);
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(err < 1e-4, "max relative error {err}");
    assert!(elapsed < 10.0, "took {elapsed:.1}s");
    println!("criterion 1 PASS: gradient max relative error {err:.2e} in {elapsed:.1}s");
}

/// Criterion 2: LRTDP with LM-cut matches the value-iteration oracle within
/// 1e-3 at the initial state of the small benchmark instances, within 60 s.
#[test]
fn criterion_2_teacher_correctness() {
    let _g = guard();
    let t0 = Instant::now();
    let cases: Vec<(DomainKind, usize)> = vec![
        (DomainKind::Ttw, 1),
        (DomainKind::Cosanostra, 1),
        (DomainKind::Cosanostra, 2),
        (DomainKind::Cosanostra, 3),
        (DomainKind::Monster, 1),
        (DomainKind::Monster, 2),
        (DomainKind::Pbw, 4),
    ];
    for (kind, size) in cases {
        let (_, _, task) = build(kind, size, 0);
        let vi = value_iteration(&task, 1e-4, 500.0, 500_000).expect("oracle enumerates");
        let relaxed = determinize_relax(&task);
        let mut h = |s: &State| HeuristicKind::LmCut.evaluate(&relaxed, s);
        let vt = lrtdp_solve(&task, &task.s0, &mut h, 1e-4, 500.0, 200_000);
        assert!(vt.converged, "{} size {} did not converge", kind, size);
        let delta = (vt.value(&task.s0) - vi.value(&task.s0)).abs();
        assert!(
            delta <= 1e-3,
            "{} size {}: solver {} vs oracle {}",
            kind,
            size,
            vt.value(&task.s0),
            vi.value(&task.s0)
        );
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s");
    println!("criterion 2 PASS: teacher matches the oracle within 1e-3 in {elapsed:.1}s");
}

/// Criterion 3: on 50 seeded toy tasks, the landmark heuristic never exceeds
/// the brute-force optimal relaxed plan cost and h-add dominates h-max,
/// within 60 s.
#[test]
fn criterion_3_heuristic_sanity() {
    let _g = guard();
    let t0 = Instant::now();
    for seed in 0..50u64 {
        let (dt, pt) = oracle::random_toy(seed);
        let d = parse_domain(&dt).unwrap();
        let p = parse_problem(&pt, &d).unwrap();
        let task = ground(&d, &p).unwrap();
        assert!(task.prop_count() <= 12);
        let rt = determinize_relax(&task);
        let opt = oracle::relaxed_plan_cost(&rt, &task.s0);
        let lm = lmcut(&rt, &task.s0);
        let hm = hmax(&rt, &task.s0);
        let ha = hadd(&rt, &task.s0);
        if opt.is_finite() {
            assert!(lm.hvalue <= opt + 1e-9, "seed {seed}: lmcut {} > opt {opt}", lm.hvalue);
        } else {
            assert!(lm.unreachable, "seed {seed}");
        }
        if hm.is_finite() {
            assert!(ha >= hm - 1e-9, "seed {seed}: hadd {ha} < hmax {hm}");
        } else {
            assert!(ha.is_infinite(), "seed {seed}");
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s");
    println!("criterion 3 PASS: admissibility and dominance on 50 toys in {elapsed:.1}s");
}

/// Criterion 4: trained on sizes 1-5, the delivery net covers 30/30 on every
/// held-out size 6-10 with mean cost exactly 3n+4 and zero variance, within
/// 45 minutes end to end.
#[test]
fn criterion_4_cosanostra_reproduction() {
    let _g = guard();
    let t0 = Instant::now();
    let (_, weights) = &*CN_LM;
    for n in 6..=10usize {
        let report = eval_size(DomainKind::Cosanostra, n, 0, weights);
        let expect = (3 * n + 4) as f64;
        assert_eq!(report.successes, TRIALS, "size {n}: coverage {}/{TRIALS}", report.successes);
        assert_eq!(report.mean_cost, Some(expect), "size {n}: mean cost");
        assert_eq!(report.ci_half_width, Some(0.0), "size {n}: variance");
        println!("  [cosanostra eval] {}", report.tsv_line());
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 2700.0, "took {elapsed:.0}s");
    println!("criterion 4 PASS: 30/30 with cost 3n+4 +/- 0 on sizes 6-10 in {elapsed:.0}s");
}

/// Criterion 5: trained on sizes 1-3, the tireworld net covers 30/30 on
/// sizes 4-6 with size-4 mean cost in [21, 26], and its weights drive a
/// size-10 instance after a save/load round trip; within 45 minutes.
#[test]
fn criterion_5_triangle_tire_reproduction() {
    let _g = guard();
    let t0 = Instant::now();
    let (domain, weights) = &*TTW_NET;
    for n in 4..=6usize {
        let report = eval_size(DomainKind::Ttw, n, 0, weights);
        assert_eq!(report.successes, TRIALS, "size {n}: coverage {}/{TRIALS}", report.successes);
        if n == 4 {
            let mean = report.mean_cost.unwrap();
            assert!((21.0..=26.0).contains(&mean), "size 4 mean cost {mean}");
        }
        println!("  [ttw eval] {}", report.tsv_line());
    }
    // Same weights, much larger instance, via the serialized form.
    let mut buf = Vec::new();
    weights.save(&mut buf).unwrap();
    let reloaded = Weights::load(&buf[..], domain).unwrap();
    assert_eq!(&reloaded, weights);
    let (_, _, big) = build(DomainKind::Ttw, 10, 0);
    let report = evaluate(&reloaded, &big, 3, EVAL_SEED, STEP_LIMIT, None).unwrap();
    assert_eq!(report.successes, 3, "size 10 spot check");
    println!("  [ttw eval] {}", report.tsv_line());
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 2700.0, "took {elapsed:.0}s");
    println!("criterion 5 PASS: 30/30 on sizes 4-6, size-4 cost in band, in {elapsed:.0}s");
}

/// Criterion 6: nets with 1, 2 and 3 proposition layers trained on corridor
/// lengths 1-5 solve exactly the lengths within their receptive field
/// (>= 28/30) and drop to blind-guess coverage (8..=22 of 30) beyond it;
/// within 30 minutes.
#[test]
fn criterion_6_monster_receptive_field() {
    let _g = guard();
    let t0 = Instant::now();
    for (depth, _, weights) in MONSTER_NETS.iter() {
        for n in 1..=5usize {
            let report = eval_size(DomainKind::Monster, n, 0, weights);
            if n <= *depth {
                assert!(
                    report.successes >= 28,
                    "depth {depth}, length {n}: coverage {}/{TRIALS}",
                    report.successes
                );
            } else {
                assert!(
                    (8..=22).contains(&report.successes),
                    "depth {depth}, length {n}: coverage {}/{TRIALS}",
                    report.successes
                );
            }
            println!("  [monster depth {depth}] {}", report.tsv_line());
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 1800.0, "took {elapsed:.0}s");
    println!("criterion 6 PASS: coverage tracks network depth in {elapsed:.0}s");
}

/// Criterion 7: without landmark features the delivery net loses coverage
/// on at least one held-out size while the landmark-equipped net from
/// criterion 4 stays at 30/30 everywhere.
#[test]
fn criterion_7_landmark_feature_ablation() {
    let _g = guard();
    let (_, with_lm) = &*CN_LM;
    let (_, without_lm) = &*CN_NOLM;
    let mut all_full = true;
    let mut any_below = false;
    for n in 6..=10usize {
        let lm_report = eval_size(DomainKind::Cosanostra, n, 0, with_lm);
        let plain_report = eval_size(DomainKind::Cosanostra, n, 0, without_lm);
        all_full &= lm_report.successes == TRIALS;
        any_below |= plain_report.successes < TRIALS;
        println!(
            "  [ablation size {n}] landmarks {}/{TRIALS}, no landmarks {}/{TRIALS}",
            lm_report.successes, plain_report.successes
        );
    }
    assert!(all_full, "landmark net must keep full coverage");
    assert!(any_below, "feature-ablated net must lose coverage somewhere");
    println!("criterion 7 PASS: landmark features are load-bearing on the delivery domain");
}

/// Criterion 8: structural invariants, within 60 s: object renaming permutes
/// the policy exactly, the masked softmax normalizes to 1e-12 with disabled
/// actions at exactly zero, pooling is contributor-order invariant, weights
/// round-trip bit-exactly, and training plus evaluation are seed-stable.
#[test]
fn criterion_8_generalisation_invariants() {
    let _g = guard();
    let t0 = Instant::now();

    // Renaming equivariance on a three-location walk domain.
    let walk = "
(define (domain walking)
  (:requirements :strips :typing)
  (:types location)
  (:predicates (at ?l - location))
  (:action walk
    :parameters (?from - location ?to - location)
    :precondition (and (at ?from))
    :effect (and (at ?to) (not (at ?from)))))";
    let d = parse_domain(walk).unwrap();
    let p1 = parse_problem(
        "(define (problem a) (:domain walking)
          (:objects x y z - location) (:init (at x)) (:goal (at z)))",
        &d,
    )
    .unwrap();
    let p2 = parse_problem(
        "(define (problem a) (:domain walking)
          (:objects x z y - location) (:init (at x)) (:goal (at y)))",
        &d,
    )
    .unwrap();
    let t1 = ground(&d, &p1).unwrap();
    let t2 = ground(&d, &p2).unwrap();
    let w = Weights::init(
        Fingerprint::from_domain(&d),
        Hyper { prop_layers: 2, hidden_dim: 8, mode: FeatureMode::LmCut },
        11,
    );
    let run = |task: &GroundTask| -> Vec<f64> {
        let rt = determinize_relax(task);
        let feats = input_features(task, &rt, &task.s0, FeatureMode::LmCut);
        let enabled = ssp::enabled_mask(task, &task.s0);
        let mut net = NetworkInstance::new(task, &w).unwrap();
        net.forward(&w, &feats.data, &enabled, None).unwrap().to_vec()
    };
    assert_eq!(run(&t1), run(&t2), "renaming equivariance");

    // Masked softmax normalization on random toy states.
    use rand::Rng;
    for seed in 0..5u64 {
        let (dt, pt) = oracle::random_toy(seed);
        let d = parse_domain(&dt).unwrap();
        let p = parse_problem(&pt, &d).unwrap();
        let task = ground(&d, &p).unwrap();
        let w = Weights::init(
            Fingerprint::from_domain(&d),
            Hyper { prop_layers: 2, hidden_dim: 8, mode: FeatureMode::LmCut },
            seed,
        );
        let rt = determinize_relax(&task);
        let mut net = NetworkInstance::new(&task, &w).unwrap();
        let mut rng = stream(seed, &[2]);
        for _ in 0..5 {
            let mut s = State::zeroed(task.prop_count());
            for i in 0..task.prop_count() as u32 {
                if rng.gen_bool(0.5) {
                    s.set(i, true);
                }
            }
            let enabled = ssp::enabled_mask(&task, &s);
            if !enabled.iter().any(|&e| e) {
                continue;
            }
            let feats = input_features(&task, &rt, &s, FeatureMode::LmCut);
            let pi = net.forward(&w, &feats.data, &enabled, None).unwrap();
            assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (k, &e) in enabled.iter().enumerate() {
                if !e {
                    assert_eq!(pi[k], 0.0);
                }
            }
        }
    }

    // Pooling permutation invariance.
    let (_, _, task) = build(DomainKind::Monster, 2, 0);
    let w = Weights::init(
        Fingerprint::from_domain(&parse_domain(&generate(DomainKind::Monster, 2, 0).0).unwrap()),
        Hyper { prop_layers: 2, hidden_dim: 8, mode: FeatureMode::LmCut },
        3,
    );
    let rt = determinize_relax(&task);
    let feats = input_features(&task, &rt, &task.s0, FeatureMode::LmCut);
    let enabled = ssp::enabled_mask(&task, &task.s0);
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    let base = net.forward(&w, &feats.data, &enabled, None).unwrap().to_vec();
    let mut shuffled = task.clone();
    for slots in &mut shuffled.contributors {
        for slot in slots {
            slot.reverse();
        }
    }
    let mut net2 = NetworkInstance::new(&shuffled, &w).unwrap();
    assert_eq!(
        base.as_slice(),
        net2.forward(&w, &feats.data, &enabled, None).unwrap(),
        "pooling permutation invariance"
    );

    // Weights file round trip, bit exact.
    let mut buf = Vec::new();
    w.save(&mut buf).unwrap();
    let d = parse_domain(&generate(DomainKind::Monster, 2, 0).0).unwrap();
    assert_eq!(Weights::load(&buf[..], &d).unwrap(), w, "weights round trip");

    // Seed reproducibility of train + eval, bit exact.
    let (dm, _) = generate(DomainKind::Monster, 1, 0);
    let dm = parse_domain(&dm).unwrap();
    let pm = parse_problem(&generate(DomainKind::Monster, 1, 0).1, &dm).unwrap();
    let quick = TrainConfig {
        explore_total: 4,
        batches_per_epoch: 20,
        batch_size: 16,
        step_limit: 50,
        prop_layers: 1,
        hidden_dim: 8,
        max_epochs: Some(2),
        seed: 21,
        ..TrainConfig::default()
    };
    let run_once = || {
        let (w, _) =
            train(&dm, &[("m1".to_string(), pm.clone())], quick.clone(), |_| {}).unwrap();
        let (_, _, task) = build(DomainKind::Monster, 1, 0);
        let report = evaluate(&w, &task, 10, 5, STEP_LIMIT, None).unwrap();
        (w, report.tsv_line(), format!("{:?}", report.outcomes))
    };
    assert_eq!(run_once(), run_once(), "train + eval seed reproducibility");

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "took {elapsed:.1}s");
    println!("criterion 8 PASS: structural invariants hold in {elapsed:.1}s");
}

/// Substitute blocks-world criterion: trained on sizes 4-6 with the
/// inadmissible teacher, the net reaches the goal in at least 27/30 trials
/// on held-out sizes 7 and 8.
#[test]
fn criterion_pbw_surrogate_generalisation() {
    let _g = guard();
    let t0 = Instant::now();
    let (_, weights) = &*PBW_NET;
    for n in [7usize, 8] {
        let report = eval_size(DomainKind::Pbw, n, 0, weights);
        assert!(
            report.successes >= 27,
            "size {n}: coverage {}/{TRIALS}",
            report.successes
        );
        println!("  [pbw eval] {}", report.tsv_line());
    }
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 2700.0, "took {elapsed:.0}s");
    println!("criterion PBW-surrogate PASS: >= 27/30 coverage on sizes 7-8 in {elapsed:.0}s");
}
