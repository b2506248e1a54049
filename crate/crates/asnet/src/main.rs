//! `asnet`: learn and run generalised policies for PPDDL domains.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use asnet::eval::evaluate;
use asnet::gen::{generate, problem_file_name, DomainKind};
use asnet::ground::{build_network_spec, dump_json, ground, FeatureMode, GroundTask};
use asnet::heur::{determinize_relax, hadd, lmcut};
use asnet::model::{check, Fingerprint, Hyper, Weights};
use asnet::ppddl::{parse_domain, parse_problem, Domain, Problem};
use asnet::ssp;
use asnet::teacher::{lrtdp_solve, policy_envelope, value_iteration, HeuristicKind};
use asnet::trainer::{train, TrainConfig};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "asnet", version, about = "Generalised policies for probabilistic planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark domain/problem pair into a directory.
    Gen(GenArgs),
    /// Ground a domain/problem pair and dump the factored task as JSON.
    Ground(GroundArgs),
    /// Evaluate a heuristic at the initial state.
    Heur(HeurArgs),
    /// Solve a problem with the trial-based teacher and report its value.
    Teacher(TeacherArgs),
    /// Train a policy network on a set of problems from one domain.
    Train(TrainArgs),
    /// Evaluate trained weights on a problem over repeated trials.
    Eval(EvalArgs),
    /// Run the built-in gradient and solver cross-checks.
    Selftest,
}

#[derive(Args)]
struct GenArgs {
    /// One of: ttw, cosanostra, pbw, monster.
    kind: String,
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; writes `<kind>-domain.pddl` and a problem file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    /// Dump format; only `json` is supported.
    #[arg(long, default_value = "json")]
    dump: String,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    dh: usize,
}

#[derive(Args)]
struct HeurArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    /// Evaluate at the problem's initial state.
    #[arg(long, default_value_t = true)]
    state_from_init: bool,
    /// Which heuristic: lmcut or hadd.
    #[arg(long)]
    which: String,
}

#[derive(Args)]
struct TeacherArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value = "lmcut")]
    heuristic: String,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long, default_value_t = 500.0)]
    penalty: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    problems: Vec<PathBuf>,
    /// Output weights file.
    #[arg(long)]
    out: PathBuf,
    /// Teacher heuristic: lmcut or hadd.
    #[arg(long, default_value = "lmcut")]
    heuristic: String,
    /// Drop the landmark flags from the input features.
    #[arg(long, default_value_t = false)]
    no_landmarks: bool,
    #[arg(long, default_value_t = 7200.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    dh: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 300)]
    t_train: usize,
    #[arg(long, default_value_t = 25)]
    explore: usize,
    #[arg(long, default_value_t = 300)]
    step_limit: usize,
    #[arg(long, default_value_t = 10)]
    plateau_window: usize,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 0.25)]
    dropout: f64,
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 30)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    step_limit: usize,
    /// Emit the report as JSON instead of a TSV line.
    #[arg(long, default_value_t = false)]
    json: bool,
    /// Write one `state-hash action cost` line per step to stderr.
    #[arg(long, default_value_t = false)]
    trace: bool,
}

fn read_to_string(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))
}

fn load_domain(path: &PathBuf) -> Result<Domain, String> {
    let text = read_to_string(path)?;
    parse_domain(&text).map_err(|e| format!("{}:{}", path.display(), e))
}

fn load_problem(path: &PathBuf, domain: &Domain) -> Result<Problem, String> {
    let text = read_to_string(path)?;
    parse_problem(&text, domain).map_err(|e| format!("{}:{}", path.display(), e))
}

fn load_task(domain: &PathBuf, problem: &PathBuf) -> Result<(Domain, Problem, GroundTask), String> {
    let d = load_domain(domain)?;
    let p = load_problem(problem, &d)?;
    let task = ground(&d, &p).map_err(|e| e.to_string())?;
    Ok((d, p, task))
}

fn parse_heuristic(s: &str) -> Result<HeuristicKind, String> {
    HeuristicKind::parse(s).ok_or_else(|| format!("unknown heuristic `{}` (use lmcut or hadd)", s))
}

fn cmd_gen(args: GenArgs) -> Result<(), String> {
    let kind = DomainKind::parse(&args.kind)
        .ok_or_else(|| format!("unknown domain kind `{}`", args.kind))?;
    if args.size == 0 {
        return Err("--size must be at least 1".into());
    }
    let (domain_text, problem_text) = generate(kind, args.size, args.seed);
    std::fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let domain_path = args.out.join(format!("{}-domain.pddl", kind.name()));
    let problem_path = args.out.join(problem_file_name(kind, args.size, args.seed));
    std::fs::write(&domain_path, &domain_text).map_err(|e| e.to_string())?;
    std::fs::write(&problem_path, &problem_text).map_err(|e| e.to_string())?;
    println!("{}", domain_path.display());
    println!("{}", problem_path.display());
    Ok(())
}

fn cmd_ground(args: GroundArgs) -> Result<(), String> {
    if args.dump != "json" {
        return Err(format!("unsupported dump format `{}`", args.dump));
    }
    let (_, _, task) = load_task(&args.domain, &args.problem)?;
    let spec = build_network_spec(&task, args.layers, args.dh, FeatureMode::LmCut);
    let value = dump_json(&task, &spec);
    println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
    Ok(())
}

fn cmd_heur(args: HeurArgs) -> Result<(), String> {
    if !args.state_from_init {
        return Err("only --state-from-init evaluation is supported".into());
    }
    let (_, _, task) = load_task(&args.domain, &args.problem)?;
    let relaxed = determinize_relax(&task);
    match args.which.as_str() {
        "hadd" => {
            println!("hadd {}", hadd(&relaxed, &task.s0));
        }
        "lmcut" => {
            let lms = lmcut(&relaxed, &task.s0);
            if lms.unreachable {
                println!("lmcut inf (goal unreachable in the relaxation)");
            } else {
                println!("lmcut {}", lms.hvalue);
            }
            for (i, lm) in lms.landmarks.iter().enumerate() {
                let names: Vec<&str> =
                    lm.iter().map(|&a| task.actions[a as usize].name.as_str()).collect();
                println!("landmark {}: {{{}}}", i, names.join(", "));
            }
        }
        other => return Err(format!("unknown heuristic `{}` (use lmcut or hadd)", other)),
    }
    Ok(())
}

fn cmd_teacher(args: TeacherArgs) -> Result<(), String> {
    let kind = parse_heuristic(&args.heuristic)?;
    let (_, _, task) = load_task(&args.domain, &args.problem)?;
    let relaxed = determinize_relax(&task);
    let mut h = |s: &ssp::State| kind.evaluate(&relaxed, s);
    let vt = lrtdp_solve(&task, &task.s0, &mut h, args.epsilon, args.penalty, 1_000_000);
    let envelope = policy_envelope(&task, &vt, &task.s0);
    println!(
        "V(s0) {:.6}\nconverged {}\nenvelope {}",
        vt.value(&task.s0),
        vt.converged,
        envelope.len()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<(), String> {
    let domain = load_domain(&args.domain)?;
    let mut problems = Vec::new();
    for path in &args.problems {
        let p = load_problem(path, &domain)?;
        problems.push((path.display().to_string(), p));
    }
    let cfg = TrainConfig {
        explore_total: args.explore,
        batches_per_epoch: args.t_train,
        batch_size: args.batch,
        step_limit: args.step_limit,
        time_limit: args.time_limit,
        plateau_window: args.plateau_window,
        heuristic: parse_heuristic(&args.heuristic)?,
        mode: if args.no_landmarks { FeatureMode::Plain } else { FeatureMode::LmCut },
        prop_layers: args.layers,
        hidden_dim: args.dh,
        learning_rate: args.lr,
        l2: args.l2,
        dropout: args.dropout,
        max_epochs: args.max_epochs,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let (weights, report) =
        train(&domain, &problems, cfg, |stats| println!("{}", stats)).map_err(|e| e.to_string())?;
    weights.save_file(&args.out).map_err(|e| e.to_string())?;
    println!(
        "stopped after {} epochs ({:?}), best success rate {:.3}, weights -> {}",
        report.epochs.len(),
        report.stop,
        report.best_success,
        args.out.display()
    );
    if report.skipped_states > 0 {
        eprintln!("note: teacher skipped {} states", report.skipped_states);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), String> {
    let domain = load_domain(&args.domain)?;
    let problem = load_problem(&args.problem, &domain)?;
    let task = ground(&domain, &problem).map_err(|e| e.to_string())?;
    let weights = Weights::load_file(&args.weights, &domain).map_err(|e| e.to_string())?;
    let mut stderr = std::io::stderr();
    let trace: Option<&mut dyn std::io::Write> =
        if args.trace { Some(&mut stderr) } else { None };
    let report = evaluate(&weights, &task, args.trials, args.seed, args.step_limit, trace)
        .map_err(|e| e.to_string())?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report.to_json()).expect("serializable"));
    } else {
        println!("{}", report.tsv_line());
    }
    Ok(())
}

fn cmd_selftest() -> Result<(), String> {
    // Gradient check on a three-action task small enough to difference
    // every coordinate.
    let tiny_domain = "
(define (domain tiny)
  (:predicates (p) (q) (r))
  (:action go :parameters () :precondition (and (p)) :effect (and (q) (not (p))))
  (:action gamble :parameters () :precondition (and (p)) :effect (probabilistic 0.5 (r)))
  (:action finish :parameters () :precondition (and (q)) :effect (and (r))))";
    let tiny_problem = "(define (problem t) (:domain tiny) (:init (p)) (:goal (r)))";
    let d = parse_domain(tiny_domain).expect("built-in domain parses");
    let p = parse_problem(tiny_problem, &d).expect("built-in problem parses");
    let task = ground(&d, &p).map_err(|e| e.to_string())?;
    let weights = Weights::init(
        Fingerprint::from_domain(&d),
        Hyper { prop_layers: 1, hidden_dim: 4, mode: FeatureMode::LmCut },
        2024,
    );
    let relaxed = determinize_relax(&task);
    let mut batch = Vec::new();
    for state in [task.s0.clone()] {
        let feats = asnet::features::input_features(&task, &relaxed, &state, FeatureMode::LmCut);
        let enabled = ssp::enabled_mask(&task, &state);
        let mut labels = vec![0.0; task.action_count()];
        labels[0] = 1.0;
        batch.push(check::CheckItem { feats, enabled, labels });
    }
    let err = check::finite_difference_max_rel_err(&task, &weights, &batch, 1e-3);
    if err < 1e-4 {
        println!("gradient check: ok (max relative error {:.2e})", err);
    } else {
        return Err(format!("gradient check failed: max relative error {:.2e}", err));
    }

    // Solver cross-check: the trial-based solver against exact value
    // iteration on small generated instances.
    for (kind, size) in
        [(DomainKind::Ttw, 1), (DomainKind::Cosanostra, 1), (DomainKind::Monster, 1)]
    {
        let (dt, pt) = generate(kind, size, 0);
        let d = parse_domain(&dt).unwrap();
        let p = parse_problem(&pt, &d).unwrap();
        let task = ground(&d, &p).map_err(|e| e.to_string())?;
        let vi = value_iteration(&task, 1e-4, 500.0, 100_000).map_err(|e| e.to_string())?;
        let relaxed = determinize_relax(&task);
        let mut h = |s: &ssp::State| HeuristicKind::LmCut.evaluate(&relaxed, s);
        let vt = lrtdp_solve(&task, &task.s0, &mut h, 1e-4, 500.0, 100_000);
        let delta = (vt.value(&task.s0) - vi.value(&task.s0)).abs();
        if !vt.converged || delta > 1e-3 {
            return Err(format!(
                "solver mismatch on {} size {}: |{} - {}| = {}",
                kind,
                size,
                vt.value(&task.s0),
                vi.value(&task.s0),
                delta
            ));
        }
        println!("teacher vs oracle on {} size {}: ok (delta {:.2e})", kind, size, delta);
    }
    println!("selftest: all checks passed");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage problems exit 1; --help/--version print and exit 0.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Ground(args) => cmd_ground(args),
        Command::Heur(args) => cmd_heur(args),
        Command::Teacher(args) => cmd_teacher(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("asnet: {}", msg);
            ExitCode::from(2)
        }
    }
}
