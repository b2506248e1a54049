use super::net::BatchItem;
use super::*;
use crate::model::check;
use crate::features::{input_features, FeatureSet};
use crate::ground::{ground, FeatureMode, GroundTask};
use crate::heur::determinize_relax;
use crate::ppddl::{parse_domain, parse_problem, Domain};
use crate::ssp::{enabled_mask, State};

pub(crate) const TINY_DOMAIN: &str = "
(define (domain tiny)
  (:predicates (p) (q) (r))
  (:action go :parameters () :precondition (and (p)) :effect (and (q) (not (p))))
  (:action gamble :parameters () :precondition (and (p)) :effect (probabilistic 0.5 (r)))
  (:action finish :parameters () :precondition (and (q)) :effect (and (r))))";
pub(crate) const TINY_PROBLEM: &str =
    "(define (problem t) (:domain tiny) (:init (p)) (:goal (r)))";

fn tiny() -> (Domain, GroundTask) {
    let d = parse_domain(TINY_DOMAIN).unwrap();
    let p = parse_problem(TINY_PROBLEM, &d).unwrap();
    let task = ground(&d, &p).unwrap();
    (d, task)
}

fn walk() -> (Domain, GroundTask) {
    let d = parse_domain(crate::ppddl::tests::WALK_DOMAIN).unwrap();
    let p = parse_problem(crate::ppddl::tests::WALK_PROBLEM, &d).unwrap();
    let task = ground(&d, &p).unwrap();
    (d, task)
}

fn hyper(n: usize, dh: usize) -> Hyper {
    Hyper { prop_layers: n, hidden_dim: dh, mode: FeatureMode::LmCut }
}

#[test]
fn init_shapes_follow_the_domain() {
    let (d, task) = walk();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(2, 16), 7);
    assert_eq!(w.key_count(), 3 + 2);
    for (key, param) in w.keys().iter().zip(w.params()) {
        match (key.layer, key.kind) {
            (1, KeyKind::Schema) => assert_eq!((param.rows, param.cols), (16, 7)),
            (2, KeyKind::Schema) => assert_eq!((param.rows, param.cols), (16, 32)),
            (3, KeyKind::Schema) => assert_eq!((param.rows, param.cols), (1, 32)),
            (_, KeyKind::Pred) => assert_eq!((param.rows, param.cols), (16, 16)),
            other => panic!("unexpected key {:?}", other),
        }
        assert!(param.b.iter().all(|&b| b == 0.0), "biases start at zero");
    }
    let _ = task;
}

#[test]
fn init_is_seed_reproducible() {
    let (d, _) = walk();
    let fp = Fingerprint::from_domain(&d);
    let a = Weights::init(fp.clone(), hyper(2, 8), 123);
    let b = Weights::init(fp.clone(), hyper(2, 8), 123);
    let c = Weights::init(fp, hyper(2, 8), 124);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn features_for(task: &GroundTask, state: &State, mode: FeatureMode) -> FeatureSet {
    let rt = determinize_relax(task);
    input_features(task, &rt, state, mode)
}

#[test]
fn singleton_enabled_action_gets_probability_one_for_any_weights() {
    let (d, task) = tiny();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(1, 4), 99);
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    // State {q}: only `finish` applies.
    let q = task.props.iter().position(|p| p.name == "q").unwrap() as u32;
    let s = State::from_indices(task.prop_count(), &[q]);
    let feats = features_for(&task, &s, FeatureMode::LmCut);
    let enabled = enabled_mask(&task, &s);
    assert_eq!(enabled.iter().filter(|&&e| e).count(), 1);
    let pi = net.forward(&w, &feats.data, &enabled, None).unwrap();
    let finish = task.actions.iter().position(|a| a.name == "finish").unwrap();
    assert_eq!(pi[finish], 1.0);
    assert_eq!(pi.iter().sum::<f64>(), 1.0);
}

#[test]
fn zero_weights_spread_probability_uniformly() {
    let (d, task) = tiny();
    let w = Weights::zeros(Fingerprint::from_domain(&d), hyper(1, 4));
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    let feats = features_for(&task, &task.s0, FeatureMode::LmCut);
    let enabled = enabled_mask(&task, &task.s0);
    let pi = net.forward(&w, &feats.data, &enabled, None).unwrap();
    // s0 = {p}: `go` and `gamble` enabled.
    let expect: Vec<f64> =
        enabled.iter().map(|&e| if e { 0.5 } else { 0.0 }).collect();
    assert_eq!(pi, expect.as_slice());
}

#[test]
fn masked_softmax_properties() {
    let logits = [1.0, 2.0, -3.0, 0.5];
    let enabled = [true, false, true, true];
    let pi = masked_softmax(&logits, &enabled).unwrap();
    assert_eq!(pi[1], 0.0);
    assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // Adding a constant to every enabled logit changes nothing.
    let shifted: Vec<f64> = logits.iter().map(|l| l + 17.25).collect();
    let pi2 = masked_softmax(&shifted, &enabled).unwrap();
    for (a, b) in pi.iter().zip(&pi2) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(matches!(
        masked_softmax(&logits, &[false; 4]),
        Err(ModelError::NoEnabledAction)
    ));
}

#[test]
fn forward_distributions_are_valid_on_random_toy_states() {
    use rand::Rng;
    for seed in 0..10u64 {
        let (dt, pt) = crate::heur::oracle::random_toy(seed);
        let d = parse_domain(&dt).unwrap();
        let p = parse_problem(&pt, &d).unwrap();
        let task = ground(&d, &p).unwrap();
        let w = Weights::init(Fingerprint::from_domain(&d), hyper(2, 8), seed);
        let mut net = NetworkInstance::new(&task, &w).unwrap();
        let rt = determinize_relax(&task);
        let mut rng = crate::rng::stream(seed, &[1]);
        for _ in 0..10 {
            let mut s = State::zeroed(task.prop_count());
            for i in 0..task.prop_count() as u32 {
                if rng.gen_bool(0.5) {
                    s.set(i, true);
                }
            }
            let enabled = enabled_mask(&task, &s);
            if !enabled.iter().any(|&e| e) {
                continue;
            }
            let feats = input_features(&task, &rt, &s, FeatureMode::LmCut);
            let pi = net.forward(&w, &feats.data, &enabled, None).unwrap();
            let total: f64 = pi.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (k, &e) in enabled.iter().enumerate() {
                if !e {
                    assert_eq!(pi[k], 0.0);
                }
            }
        }
    }
}

#[test]
fn perfect_prediction_has_negligible_data_loss() {
    let (d, task) = tiny();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(1, 4), 5);
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    let q = task.props.iter().position(|p| p.name == "q").unwrap() as u32;
    let s = State::from_indices(task.prop_count(), &[q]);
    let feats = features_for(&task, &s, FeatureMode::LmCut);
    let enabled = enabled_mask(&task, &s);
    let finish = task.actions.iter().position(|a| a.name == "finish").unwrap();
    let mut labels = vec![0.0; task.action_count()];
    labels[finish] = 1.0;
    let mut rng = crate::rng::stream(0, &[]);
    let batch = [BatchItem { feats: &feats.data, enabled: &enabled, labels: &labels }];
    let (loss, _) = loss_and_grad(&mut net, &w, &batch, 0.0, 0.0, &mut rng).unwrap();
    assert!(loss <= 1e-9, "loss {loss}");
}

#[test]
fn uniform_two_way_split_costs_two_log_two() {
    let (d, task) = tiny();
    let w = Weights::zeros(Fingerprint::from_domain(&d), hyper(1, 4));
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    let feats = features_for(&task, &task.s0, FeatureMode::LmCut);
    let enabled = enabled_mask(&task, &task.s0);
    let go = task.actions.iter().position(|a| a.name == "go").unwrap();
    let mut labels = vec![0.0; task.action_count()];
    labels[go] = 1.0;
    let mut rng = crate::rng::stream(0, &[]);
    let batch = [BatchItem { feats: &feats.data, enabled: &enabled, labels: &labels }];
    let (loss, _) = loss_and_grad(&mut net, &w, &batch, 0.0, 0.0, &mut rng).unwrap();
    assert!((loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12, "loss {loss}");
}

pub(crate) fn tiny_gradient_batch(task: &GroundTask) -> Vec<check::CheckItem> {
    let rt = determinize_relax(task);
    let p = task.props.iter().position(|p| p.name == "p").unwrap() as u32;
    let q = task.props.iter().position(|p| p.name == "q").unwrap() as u32;
    let go = task.actions.iter().position(|a| a.name == "go").unwrap();
    let gamble = task.actions.iter().position(|a| a.name == "gamble").unwrap();
    let finish = task.actions.iter().position(|a| a.name == "finish").unwrap();
    let mut batch = Vec::new();
    for (trues, labeled) in [
        (vec![p], vec![go]),
        (vec![q], vec![finish]),
        (vec![p, q], vec![gamble, finish]),
    ] {
        let s = State::from_indices(task.prop_count(), &trues);
        let feats = input_features(task, &rt, &s, FeatureMode::LmCut);
        let enabled = enabled_mask(task, &s);
        let mut labels = vec![0.0; task.action_count()];
        for a in labeled {
            labels[a] = 1.0;
        }
        batch.push(check::CheckItem { feats, enabled, labels });
    }
    batch
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let (d, task) = tiny();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(1, 4), 2024);
    let batch = tiny_gradient_batch(&task);
    let err = check::finite_difference_max_rel_err(&task, &w, &batch, 1e-3);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn adam_with_zero_gradient_leaves_weights_unchanged() {
    let (d, _) = walk();
    let mut w = Weights::init(Fingerprint::from_domain(&d), hyper(1, 4), 1);
    let before = w.clone();
    let mut st = AdamState::new(&w, AdamConfig::default());
    let grads = w.zero_grads();
    adam_step(&mut w, &mut st, &grads);
    assert_eq!(w, before);
}

#[test]
fn first_adam_step_moves_by_alpha_times_sign() {
    let (d, _) = walk();
    let mut w = Weights::init(Fingerprint::from_domain(&d), hyper(1, 4), 1);
    let before = w.clone();
    let cfg = AdamConfig { alpha: 0.01, ..AdamConfig::default() };
    let mut st = AdamState::new(&w, cfg);
    let mut grads = w.zero_grads();
    for p in &mut grads.params {
        for (i, g) in p.w.iter_mut().enumerate() {
            *g = if i % 2 == 0 { 0.3 } else { -1.7 };
        }
    }
    adam_step(&mut w, &mut st, &grads);
    for (pa, pb) in w.params().iter().zip(before.params()) {
        for (i, (a, b)) in pa.w.iter().zip(&pb.w).enumerate() {
            let expect = if i % 2 == 0 { -0.01 } else { 0.01 };
            assert!((a - b - expect).abs() < 1e-6, "step {} vs {}", a - b, expect);
        }
    }
}

#[test]
fn optimizer_drives_toy_batch_loss_down() {
    let (d, task) = tiny();
    let mut w = Weights::init(Fingerprint::from_domain(&d), hyper(1, 4), 31);
    // Single-label items only: a two-label item has an irreducible floor of
    // 2 ln 2, which would mask convergence.
    let mut batch = tiny_gradient_batch(&task);
    let finish = task.actions.iter().position(|a| a.name == "finish").unwrap();
    batch[2].labels[finish] = 0.0;
    let items: Vec<BatchItem> = batch
        .iter()
        .map(|it| BatchItem { feats: &it.feats.data, enabled: &it.enabled, labels: &it.labels })
        .collect();
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    let mut st = AdamState::new(&w, AdamConfig { alpha: 0.02, ..AdamConfig::default() });
    let mut rng = crate::rng::stream(0, &[]);
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        let (loss, grads) = loss_and_grad(&mut net, &w, &items, 0.0, 0.0, &mut rng).unwrap();
        adam_step(&mut w, &mut st, &grads);
        last = loss;
    }
    assert!(last < 0.05, "final loss {last}");
}

#[test]
fn save_load_round_trip_is_bit_exact() {
    let (d, _) = walk();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(2, 16), 77);
    let mut buf = Vec::new();
    w.save(&mut buf).unwrap();
    assert_eq!(&buf[..7], WEIGHTS_MAGIC);
    let w2 = Weights::load(&buf[..], &d).unwrap();
    assert_eq!(w, w2);
}

#[test]
fn loading_against_a_renamed_schema_is_a_domain_mismatch() {
    let (d, _) = walk();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(1, 4), 7);
    let mut buf = Vec::new();
    w.save(&mut buf).unwrap();
    let renamed =
        parse_domain(&crate::ppddl::tests::WALK_DOMAIN.replace(":action walk", ":action stroll"))
            .unwrap();
    assert!(matches!(
        Weights::load(&buf[..], &renamed),
        Err(ModelError::DomainMismatch(_))
    ));
    assert!(matches!(
        Weights::load(&buf[..buf.len() - 3], &d),
        Err(ModelError::Format(_))
    ));
}

#[test]
fn pooling_is_invariant_to_contributor_order() {
    let (d, task) = tiny();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(2, 8), 3);
    let feats = features_for(&task, &task.s0, FeatureMode::LmCut);
    let enabled = enabled_mask(&task, &task.s0);
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    let base = net.forward(&w, &feats.data, &enabled, None).unwrap().to_vec();

    let mut shuffled = task.clone();
    for slots in &mut shuffled.contributors {
        for slot in slots {
            slot.reverse();
        }
    }
    let mut net2 = NetworkInstance::new(&shuffled, &w).unwrap();
    let permuted = net2.forward(&w, &feats.data, &enabled, None).unwrap();
    assert_eq!(base.as_slice(), permuted);
}

#[test]
fn renaming_objects_permutes_the_policy_exactly() {
    let d = parse_domain(crate::ppddl::tests::WALK_DOMAIN).unwrap();
    let p1 = parse_problem(
        "(define (problem a) (:domain walking)
          (:objects x y z - location) (:init (at x)) (:goal (at z)))",
        &d,
    )
    .unwrap();
    // Swap y and z in place: same positions, renamed objects.
    let p2 = parse_problem(
        "(define (problem a) (:domain walking)
          (:objects x z y - location) (:init (at x)) (:goal (at y)))",
        &d,
    )
    .unwrap();
    let t1 = ground(&d, &p1).unwrap();
    let t2 = ground(&d, &p2).unwrap();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(2, 8), 11);
    let rt1 = determinize_relax(&t1);
    let rt2 = determinize_relax(&t2);
    let f1 = input_features(&t1, &rt1, &t1.s0, FeatureMode::LmCut);
    let f2 = input_features(&t2, &rt2, &t2.s0, FeatureMode::LmCut);
    let e1 = enabled_mask(&t1, &t1.s0);
    let e2 = enabled_mask(&t2, &t2.s0);
    let mut n1 = NetworkInstance::new(&t1, &w).unwrap();
    let mut n2 = NetworkInstance::new(&t2, &w).unwrap();
    let pi1 = n1.forward(&w, &f1.data, &e1, None).unwrap().to_vec();
    let pi2 = n2.forward(&w, &f2.data, &e2, None).unwrap();
    // Identical index-level tasks; probabilities agree exactly and the name
    // at each index carries the renaming.
    assert_eq!(pi1.as_slice(), pi2);
    let rename = |s: &str| s.replace('y', "#").replace('z', "y").replace('#', "z");
    for (a1, a2) in t1.actions.iter().zip(&t2.actions) {
        assert_eq!(rename(&a1.name), a2.name);
    }
}

#[test]
fn same_weights_drive_problems_of_different_sizes() {
    let d = parse_domain(crate::ppddl::tests::WALK_DOMAIN).unwrap();
    let small = parse_problem(crate::ppddl::tests::WALK_PROBLEM, &d).unwrap();
    let big = parse_problem(
        "(define (problem big) (:domain walking)
          (:objects l0 l1 l2 l3 l4 l5 - location) (:init (at l0)) (:goal (at l5)))",
        &d,
    )
    .unwrap();
    let ts = ground(&d, &small).unwrap();
    let tb = ground(&d, &big).unwrap();
    assert_ne!(ts.action_count(), tb.action_count());
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(2, 8), 5);
    for task in [&ts, &tb] {
        let rt = determinize_relax(task);
        let feats = input_features(task, &rt, &task.s0, FeatureMode::LmCut);
        let enabled = enabled_mask(task, &task.s0);
        let mut net = NetworkInstance::new(task, &w).unwrap();
        let pi = net.forward(&w, &feats.data, &enabled, None).unwrap();
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn dropout_only_affects_training_mode() {
    let (d, task) = tiny();
    let w = Weights::init(Fingerprint::from_domain(&d), hyper(2, 8), 13);
    let feats = features_for(&task, &task.s0, FeatureMode::LmCut);
    let enabled = enabled_mask(&task, &task.s0);
    let mut net = NetworkInstance::new(&task, &w).unwrap();
    let eval1 = net.forward(&w, &feats.data, &enabled, None).unwrap().to_vec();
    let mut rng = crate::rng::stream(4, &[]);
    let train =
        net.forward(&w, &feats.data, &enabled, Some(DropoutPlan { p: 0.25, rng: &mut rng })).unwrap().to_vec();
    let eval2 = net.forward(&w, &feats.data, &enabled, None).unwrap().to_vec();
    assert_eq!(eval1, eval2, "evaluation forward is pure");
    assert_ne!(eval1, train, "dropout perturbs the training forward");
}
