//! Command-line front end: input parsing, experiment orchestration, and
//! machine-readable outputs for the broadcast-channel toolkit.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use qbc_core::codesim::{
    analytic_bound, monte_carlo, CodebookSpec, Scenario, SimContext, SimInstance,
};
use qbc_core::cqstate::{channel_from_json, dist_from_json};
use qbc_core::lemmas::{
    certify_hayashi_nagaoka, certify_hypothesis_testing, certify_nested_pinching_proposition,
    certify_petz_to_sandwich, certify_union_bound, Certificate,
};
use qbc_core::pinching::{check_count_bounds, verify_pinching_inequality};
use qbc_core::region::{
    evaluate_region, pareto_search, region_spec, ParetoConfig, RegionInput, TheoremId,
};
use qbc_core::sampling::Sampler;
use qbc_core::{CqState, QbcError};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "qbc", version, about = "Three-receiver cq broadcast channel toolkit")]
struct Cli {
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Eigenvalue clustering / certification tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Output path for the JSON artifact (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps and Monte-Carlo trials.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Total-dimension cap for dense operators.
    #[arg(long, global = true, default_value_t = 256)]
    dim_cap: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify operator inequalities and bound lemmas on random sweeps.
    Verify(VerifyArgs),
    /// Rate-region evaluation, Fourier-Motzkin checks, comparisons, Pareto search.
    #[command(subcommand)]
    Region(RegionCmd),
    /// Simulate a one-shot code and compare against its analytic bounds.
    Simulate(SimulateArgs),
    /// Distinct-eigenvalue counts of pinched tensor powers vs their bounds.
    Eigencount(EigencountArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// lemmas | pinching | all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Orders for the hypothesis-testing and conversion lemmas.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    alpha: Vec<f64>,
}

#[derive(Subcommand)]
enum RegionCmd {
    /// Evaluate a theorem's region on a channel + distribution instance.
    Evaluate(RegionInstanceArgs),
    /// Check that eliminating the preliminary system reproduces the theorem.
    FmCheck(RegionInstanceArgs),
    /// Containment report between two theorem instances.
    Compare(RegionCompareArgs),
    /// Pareto frontier search over admissible distributions.
    Pareto(ParetoArgs),
}

#[derive(Args)]
struct RegionInstanceArgs {
    /// Theorem name (marton, multilevel, general2, general3, superposition,
    /// converse-multilevel, converse-general2, or their -prelim variants).
    #[arg(long)]
    theorem: String,
    #[arg(long)]
    channel: PathBuf,
    #[arg(long)]
    dist: PathBuf,
    /// Also write the inequality system as exact-fraction text.
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct RegionCompareArgs {
    #[arg(long)]
    theorem_a: String,
    #[arg(long)]
    theorem_b: String,
    #[arg(long)]
    channel: PathBuf,
    #[arg(long)]
    dist: PathBuf,
}

#[derive(Args)]
struct ParetoArgs {
    #[arg(long)]
    theorem: String,
    #[arg(long)]
    channel: PathBuf,
    #[arg(long, default_value_t = 40)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    aux_size: usize,
    /// CSV output path for the frontier vertices.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON spec: scenario, rates, channel/dist paths, alpha list, trials, theta.
    #[arg(long)]
    spec: PathBuf,
}

#[derive(Args)]
struct EigencountArgs {
    /// cq-state base family (JSON; see README for the schema).
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    n: usize,
}

#[derive(Serialize)]
struct Artifact<T: Serialize> {
    version: &'static str,
    seed: u64,
    tolerance: f64,
    passed: bool,
    payload: T,
}

fn emit<T: Serialize>(cli: &Cli, passed: bool, payload: T) -> Result<(), QbcError> {
    let artifact = Artifact {
        version: VERSION,
        seed: cli.seed,
        tolerance: cli.tol,
        passed,
        payload,
    };
    let text = serde_json::to_string_pretty(&artifact).expect("serializable artifact");
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn read(path: &PathBuf) -> Result<String, QbcError> {
    std::fs::read_to_string(path).map_err(|e| QbcError::BadInput {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn load_instance(
    channel_path: &PathBuf,
    dist_path: &PathBuf,
) -> Result<(qbc_core::BroadcastChannel, RegionInput), QbcError> {
    let channel = channel_from_json(&read(channel_path)?)?;
    let (dist, x_of) = dist_from_json(&read(dist_path)?)?;
    let input = match x_of {
        Some(x_of) => RegionInput { dist, x_of },
        None => RegionInput::from_dist_with_x(dist)?,
    };
    Ok((channel, input))
}

fn cert_summary(certs: &[Certificate]) -> serde_json::Value {
    let min_margin = certs.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let passed = certs.iter().all(|c| c.passed);
    json!({
        "instances": certs.len(),
        "min_margin": min_margin,
        "passed": passed,
    })
}

fn run_verify(cli: &Cli, args: &VerifyArgs) -> Result<bool, QbcError> {
    let tol = cli.tol;
    let mut report = BTreeMap::new();
    let mut all_passed = true;

    if args.suite == "lemmas" || args.suite == "all" {
        let mut hn = Vec::new();
        let mut hp = Vec::new();
        let mut ps = Vec::new();
        let mut ub = Vec::new();
        let mut nested = Vec::new();
        for i in 0..args.trials {
            let mut s = Sampler::child(cli.seed, i as u64);
            let dim = 2 + s.below(3);
            let sop = s.random_contraction(dim);
            let rank = 1 + s.below(dim);
            let weight = s.uniform(0.0, 2.0);
            let top = s.random_projector(dim, rank).scale(weight);
            hn.push(certify_hayashi_nagaoka(&sop, &top, tol, &format!("seed {i}"))?);

            let rho = s.random_density(dim);
            let sigma = s.random_density(dim);
            let m = 2f64.powf(s.uniform(-4.0, 8.0));
            let alpha = args.alpha[i % args.alpha.len()];
            hp.push(certify_hypothesis_testing(
                &rho,
                &sigma,
                m,
                alpha,
                tol,
                &format!("seed {i}"),
            )?);
            ps.push(certify_petz_to_sandwich(
                &rho,
                &sigma,
                alpha,
                tol,
                &format!("seed {i}"),
            )?);

            // commuting 0..1 operators plus a random state
            let basis = s.random_hermitian(dim).spectral(1e-12);
            let ops: Vec<_> = (0..3)
                .map(|_| {
                    let mut acc = qbc_core::HermitianOperator::zeros(dim);
                    for es in &basis.eigenspaces {
                        if s.uniform(0.0, 1.0) < 0.5 {
                            acc = acc.add(&es.projector);
                        }
                    }
                    acc
                })
                .collect();
            ub.push(certify_union_bound(&ops, &rho, tol, &format!("seed {i}"))?);

            let joint = s.random_joint(&[("u", 2), ("v", 2), ("x", 2)]);
            let conds = (0..8).map(|_| s.random_density(2)).collect();
            let state = CqState::new(joint, 2, conds)?;
            nested.extend(certify_nested_pinching_proposition(
                &state,
                alpha,
                tol,
                &format!("seed {i}"),
            )?);
        }
        for (name, certs) in [
            ("hayashi_nagaoka", &hn),
            ("hypothesis_testing", &hp),
            ("petz_sandwich", &ps),
            ("union_bound", &ub),
            ("nested_pinching", &nested),
        ] {
            let summary = cert_summary(certs);
            all_passed &= summary["passed"].as_bool().unwrap();
            report.insert(name.to_string(), summary);
        }
    }

    if args.suite == "pinching" || args.suite == "all" {
        let mut worst = f64::INFINITY;
        for i in 0..args.trials {
            let mut s = Sampler::child(cli.seed.wrapping_add(1), i as u64);
            let dim = 2 + s.below(5);
            let rho = s.random_density(dim);
            let sigma = s.random_density(dim);
            worst = worst.min(verify_pinching_inequality(&rho, &sigma, tol)?);
        }
        let passed = worst >= -tol;
        all_passed &= passed;
        report.insert(
            "pinching_inequality".to_string(),
            json!({"instances": args.trials, "min_margin": worst, "passed": passed}),
        );
    }

    emit(cli, all_passed, report)?;
    Ok(all_passed)
}

fn run_region(cli: &Cli, cmd: &RegionCmd) -> Result<bool, QbcError> {
    let tol = cli.tol;
    match cmd {
        RegionCmd::Evaluate(args) => {
            let id = TheoremId::parse(&args.theorem)?;
            let (channel, input) = load_instance(&args.channel, &args.dist)?;
            let inst = evaluate_region(id, &channel, &input, tol)?;
            if let Some(path) = &args.text {
                std::fs::write(path, inst.system.to_text())?;
            }
            let atoms: BTreeMap<_, _> = inst
                .atoms
                .iter()
                .map(|(k, a)| {
                    (
                        k.clone(),
                        json!({
                            "value": a.value,
                            "rational": a.rational_value.to_string(),
                        }),
                    )
                })
                .collect();
            let ineqs: Vec<String> = inst
                .system
                .to_text()
                .lines()
                .skip(1)
                .map(|s| s.to_string())
                .collect();
            emit(
                cli,
                true,
                json!({
                    "theorem": id.name(),
                    "banner": inst.banner,
                    "atoms": atoms,
                    "inequalities": ineqs,
                }),
            )?;
            Ok(true)
        }
        RegionCmd::FmCheck(args) => {
            let fin = TheoremId::parse(&args.theorem)?;
            let prelim = match fin {
                TheoremId::MartonFinal => TheoremId::MartonPrelim,
                TheoremId::MultilevelFinal => TheoremId::MultilevelPrelim,
                TheoremId::General2Final => TheoremId::General2Prelim,
                TheoremId::General3Final => TheoremId::General3Prelim,
                other => {
                    return Err(QbcError::BadRequest(format!(
                        "{} has no preliminary system",
                        other.name()
                    )))
                }
            };
            let (channel, input) = load_instance(&args.channel, &args.dist)?;
            let equal =
                qbc_core::region::reproduce_final_region(&channel, &input, prelim, fin, tol)?;
            emit(
                cli,
                equal,
                json!({"theorem": fin.name(), "projection_equals_theorem": equal}),
            )?;
            Ok(equal)
        }
        RegionCmd::Compare(args) => {
            let a = TheoremId::parse(&args.theorem_a)?;
            let b = TheoremId::parse(&args.theorem_b)?;
            let (channel, input) = load_instance(&args.channel, &args.dist)?;
            let ia = evaluate_region(a, &channel, &input, tol)?;
            let ib = evaluate_region(b, &channel, &input, tol)?;
            let a_in_b = ia.system.contains(&ib.system)?;
            let b_in_a = ib.system.contains(&ia.system)?;
            emit(
                cli,
                true,
                json!({
                    "a": a.name(),
                    "b": b.name(),
                    "a_subset_of_b": a_in_b,
                    "b_subset_of_a": b_in_a,
                    "equal": a_in_b && b_in_a,
                }),
            )?;
            Ok(true)
        }
        RegionCmd::Pareto(args) => {
            let id = TheoremId::parse(&args.theorem)?;
            let channel = channel_from_json(&read(&args.channel)?)?;
            let cfg = ParetoConfig {
                samples: args.samples,
                seed: cli.seed,
                aux_size: args.aux_size,
                ..ParetoConfig::default()
            };
            let frontier = pareto_search(id, &channel, &cfg, tol)?;
            if let Some(path) = &args.csv {
                let mut csv = String::new();
                let spec = region_spec(id);
                csv.push_str(&spec.rate_vars.join(","));
                csv.push('\n');
                for p in &frontier {
                    let row: Vec<String> = p.rates.iter().map(|r| r.to_string()).collect();
                    csv.push_str(&row.join(","));
                    csv.push('\n');
                }
                std::fs::write(path, csv)?;
            }
            emit(cli, true, json!({"theorem": id.name(), "frontier": frontier}))?;
            Ok(true)
        }
    }
}

#[derive(serde::Deserialize)]
struct SimSpecFile {
    scenario: Scenario,
    rates: BTreeMap<String, f64>,
    channel: PathBuf,
    dist: PathBuf,
    #[serde(default)]
    alpha: Vec<f64>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_theta")]
    theta: f64,
}

fn default_trials() -> usize {
    100
}

fn default_theta() -> f64 {
    0.5
}

fn run_simulate(cli: &Cli, args: &SimulateArgs) -> Result<bool, QbcError> {
    let file: SimSpecFile = serde_json::from_str(&read(&args.spec)?)
        .map_err(|e| QbcError::Parse(format!("{}: {e}", args.spec.display())))?;
    let channel = channel_from_json(&read(&file.channel)?)?;
    let (dist, x_of) = dist_from_json(&read(&file.dist)?)?;
    let input = match x_of {
        Some(x_of) => RegionInput { dist, x_of },
        None => RegionInput::from_dist_with_x(dist)?,
    };
    let instance = SimInstance::new(file.scenario, channel, input.dist, input.x_of)?;
    let ctx = SimContext::new(instance, cli.tol)?;
    let spec = CodebookSpec {
        scenario: file.scenario,
        rates: file.rates,
        theta: file.theta,
        seed: file.seed,
    };
    let master = if file.seed != 0 { file.seed } else { cli.seed };
    let stats = monte_carlo(&ctx, &spec, file.trials, master)?;
    let alphas = if file.alpha.is_empty() {
        vec![0.3]
    } else {
        file.alpha.clone()
    };
    let mut bounds = Vec::new();
    let mut sound = true;
    for &alpha in &alphas {
        let rb = analytic_bound(&ctx, &spec, alpha)?;
        for b in &rb {
            if let Some(mc) = stats.receivers.iter().find(|m| m.receiver == b.receiver) {
                sound &= mc.mean_error
                    <= b.petz_total
                        + 3.0 * mc.std_error
                        + stats.encoder_failure_fraction
                        + cli.tol;
            }
        }
        bounds.push(json!({"alpha": alpha, "receivers": rb}));
    }
    let completeness_ok = stats
        .receivers
        .iter()
        .all(|r| r.min_completeness_margin >= -1e-9);
    let passed = sound && completeness_ok;
    emit(
        cli,
        passed,
        json!({
            "measured": stats,
            "bounds": bounds,
            "bound_soundness": sound,
            "povm_subcomplete": completeness_ok,
        }),
    )?;
    Ok(passed)
}

fn run_eigencount(cli: &Cli, args: &EigencountArgs) -> Result<bool, QbcError> {
    let state = qbc_core::cqstate::cq_from_json(&read(&args.base)?)?;
    let report = check_count_bounds(&state, args.n, cli.tol, None, cli.dim_cap)?;
    let passed = report.all_within;
    emit(cli, passed, report)?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let result = match &cli.command {
        Command::Verify(args) => run_verify(&cli, args),
        Command::Region(cmd) => run_region(&cli, cmd),
        Command::Simulate(args) => run_simulate(&cli, args),
        Command::Eigencount(args) => run_eigencount(&cli, args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
