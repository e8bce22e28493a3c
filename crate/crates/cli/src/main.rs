use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sparse_sysid::design::{build_regression, build_regression_prefix};
use sparse_sysid::estimators::{error_report, estimate_lasso, estimate_ls, LambdaRule, LassoConfig, MarkovMatrix};
use sparse_sysid::harness::{emit_plot_data, run_experiment, write_outputs, ExperimentConfig, ExperimentReport, GROUP_KEYS};
use sparse_sysid::io::{write_json, SystemDocument, TrajectoryDocument};
use sparse_sysid::realization::{build_hankel, ho_kalman, Provenance, DEFAULT_SV_THRESHOLD};
use sparse_sysid::rng::derive_seed;
use sparse_sysid::system::{certify_stability, generate_paper_system, simulate, NoiseConfig};
use sparse_sysid::theory::{check_row_l1, eval_theory, p_norm_check, verify_lambda_terms, verify_rsv, ThetaSampler, DEFAULT_ETA};

#[derive(Parser)]
#[command(name = "sysid", version, about = "Sparse identification of partially observed linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a banded system and simulate one trajectory.
    Simulate(SimulateArgs),
    /// Estimate the Markov parameters from a trajectory.
    Estimate(EstimateArgs),
    /// Ho-Kalman realization from Markov parameters.
    Realize(RealizeArgs),
    /// Evaluate the theoretical bounds and run the Monte Carlo checks.
    VerifyTheory(VerifyArgs),
    /// Run a grid experiment and write its report and CSV files.
    Experiment(ExperimentArgs),
    /// Write plot-ready CSV files from an experiment report.
    EmitPlots(EmitArgs),
}

/// Overrides for the experiment config keys.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Config file in `key = value` format.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    horizons: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// `sigma_w2:sigma_v2` pairs.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    /// `simulation`, `theorem:<c0>:<eps>` or `fixed:<value>`.
    #[arg(long)]
    lambda_rule: Option<String>,
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    outputs: Option<String>,
    #[arg(long)]
    sigma_u: Option<String>,
    #[arg(long)]
    bandwidth: Option<String>,
    #[arg(long)]
    target_rho: Option<String>,
    #[arg(long)]
    hankel_order: Option<String>,
    #[arg(long)]
    tau_max: Option<String>,
    #[arg(long)]
    lasso_max_iters: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self, seed: u64) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::desk(),
        };
        if let Some(preset) = &self.preset {
            cfg.set("preset", preset)?;
        }
        let overrides = [
            ("n", &self.n),
            ("m", &self.m),
            ("p", &self.p),
            ("horizons", &self.horizons),
            ("samples", &self.samples),
            ("noise", &self.noise),
            ("seeds", &self.seeds),
            ("lambda_rule", &self.lambda_rule),
            ("estimators", &self.estimators),
            ("metrics", &self.metrics),
            ("outputs", &self.outputs),
            ("sigma_u", &self.sigma_u),
            ("bandwidth", &self.bandwidth),
            ("target_rho", &self.target_rho),
            ("hankel_order", &self.hankel_order),
            ("tau_max", &self.tau_max),
            ("lasso_max_iters", &self.lasso_max_iters),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.base_seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
    /// Trajectory length; defaults to `max N + max T − 1`.
    #[arg(long)]
    length: Option<usize>,
    /// Which entry of the noise grid to use.
    #[arg(long, default_value_t = 0)]
    noise_index: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Lasso,
    Ls,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    trajectory: PathBuf,
    /// True system, for error reporting and the theorem λ rule.
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    horizon: usize,
    /// Use only the first `samples + horizon − 1` steps.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum, default_value = "lasso")]
    estimator: EstimatorArg,
    #[arg(long, default_value = "simulation")]
    lambda_rule: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RealizeArgs {
    #[arg(long)]
    seed: u64,
    /// A `system.v1` document holding either `G` or a full system.
    #[arg(long)]
    markov: PathBuf,
    /// Hankel order `K`.
    #[arg(long)]
    order: usize,
    /// Forced realization order; chosen from the singular values when absent.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SV_THRESHOLD)]
    sv_threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EmitArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
    /// Metrics to emit; the report's configured metrics when absent.
    #[arg(long, value_delimiter = ',')]
    metric: Vec<String>,
    /// Grouping keys for the median tables.
    #[arg(long, value_delimiter = ',', default_values_t = ["estimator".to_string(), "T".to_string(), "N".to_string()])]
    group_by: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn cmd_simulate(args: &SimulateArgs) -> Result<bool> {
    let cfg = args.config.resolve(args.seed)?;
    let &(w2, v2) = cfg.noise.get(args.noise_index).context("noise index outside the noise grid")?;
    let sys = generate_paper_system(cfg.n, cfg.m, cfg.p, cfg.bandwidth, cfg.target_rho, args.seed)?;
    let noise = NoiseConfig::new(cfg.sigma_u, w2.sqrt(), v2.sqrt(), derive_seed(args.seed, args.noise_index as u64 + 1))?;
    let max_t = cfg.horizons.iter().max().copied().unwrap_or(1);
    let max_n = cfg.samples.iter().max().copied().unwrap_or(1);
    let length = args.length.unwrap_or(max_n + max_t - 1);
    let traj = simulate(&sys, &noise, length)?;
    let cert = certify_stability(&sys, &noise, cfg.tau_max)?;
    std::fs::create_dir_all(&args.out)?;
    SystemDocument::from_system(&sys).write(&args.out.join("system.json"))?;
    TrajectoryDocument::from_trajectory(&traj).write(&args.out.join("trajectory.json"))?;
    write_json(&args.out.join("certificate.json"), &cert)?;
    print_json(&json!({ "length": length, "rho": cert.rho, "c_sys": cert.c_sys, "out": args.out }));
    Ok(true)
}

fn cmd_estimate(args: &EstimateArgs) -> Result<bool> {
    let traj = TrajectoryDocument::read(&args.trajectory)?.to_trajectory()?;
    let sys = args.system.as_deref().map(|p| SystemDocument::read(p).and_then(|d| d.to_system())).transpose()?;
    let data = match args.samples {
        Some(n) => build_regression_prefix(&traj, sys.as_ref(), args.horizon, n)?,
        None => build_regression(&traj, sys.as_ref(), args.horizon)?,
    };
    let (p, samples) = (data.p, data.samples());
    let (markov, lambda, converged, underdetermined) = match args.estimator {
        EstimatorArg::Ls => {
            let ls = estimate_ls(&data)?;
            (ls.markov, 0.0, true, ls.underdetermined)
        }
        EstimatorArg::Lasso => {
            let rule: LambdaRule = args.lambda_rule.parse()?;
            if matches!(rule, LambdaRule::Theorem { .. }) && sys.is_none() {
                bail!("the theorem rule needs --system");
            }
            let n = sys.as_ref().map_or(traj.states[0].len(), |s| s.n());
            let sigma_w_bar = match &sys {
                Some(s) => eval_theory(s, &certify_stability(s, &traj.noise, 200)?, &traj.noise, args.horizon, samples, rule.epsilon(args.horizon), DEFAULT_ETA)?
                    .theorem2
                    .sigma_w_bar,
                None => 0.0,
            };
            let lambda = rule.value(&traj.noise, sigma_w_bar, args.horizon, p, n, samples);
            let est = estimate_lasso(&data, &LassoConfig::with_lambda(lambda))?;
            let converged = est.ensure_converged().is_ok();
            (est.markov, lambda, converged, false)
        }
    };
    SystemDocument::from_markov(&markov).write(&args.out)?;
    let mut summary = json!({ "T": args.horizon, "N": samples, "lambda": lambda, "converged": converged, "underdetermined": underdetermined });
    if let Some(sys) = &sys {
        let err = error_report(&MarkovMatrix::from_system(sys, args.horizon), &markov)?;
        summary["markov_fro"] = json!(err.norm_fro);
        summary["markov_2inf"] = json!(err.norm_2inf);
    }
    print_json(&summary);
    Ok(converged)
}

fn cmd_realize(args: &RealizeArgs) -> Result<bool> {
    let doc = SystemDocument::read(&args.markov)?;
    let (g, mode) = if doc.has_system() {
        (MarkovMatrix::from_system(&doc.to_system()?, 2 * args.order - 1), Provenance::True)
    } else {
        (doc.to_markov()?, Provenance::ZeroPaddedEstimate)
    };
    let real = ho_kalman(&build_hankel(&g, args.order, mode)?, args.rank, args.sv_threshold)?;
    SystemDocument::from_realization(&real).write(&args.out)?;
    print_json(&json!({ "order": real.order, "singular_values": real.singular_values }));
    Ok(true)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let cfg = args.config.resolve(args.seed)?;
    let (t, samples, (w2, v2)) = (cfg.horizons[0], cfg.samples[0], cfg.noise[0]);
    let sys = generate_paper_system(cfg.n, cfg.m, cfg.p, cfg.bandwidth, cfg.target_rho, args.seed)?;
    let noise = NoiseConfig::new(cfg.sigma_u, w2.sqrt(), v2.sqrt(), derive_seed(args.seed, 1))?;
    let cert = certify_stability(&sys, &noise, cfg.tau_max)?;
    let epsilon = cfg.lambda_rule.epsilon(t);
    let bounds = eval_theory(&sys, &cert, &noise, t, samples, epsilon, args.eta)?;
    let rsv = verify_rsv(t, cfg.p, samples, args.eta, args.trials, ThetaSampler::WeaklySparse { decay: 0.9 }, cfg.sigma_u, derive_seed(args.seed, 2))?;
    let theta = ThetaSampler::WeaklySparse { decay: 0.9 }.sample(&mut sparse_sysid::rng::stream(args.seed, sparse_sysid::rng::Channel::Trial, 0), t, cfg.p, args.seed)?;
    let p_check = p_norm_check(theta.as_slice(), t, cfg.p, samples)?;
    let row_l1 = check_row_l1(&MarkovMatrix::from_system(&sys, cfg.tau_max), &cert);
    let lambda = cfg.lambda_rule.value(&noise, bounds.theorem2.sigma_w_bar, t, cfg.p, cfg.n, samples);
    let terms = verify_lambda_terms(&sys, &cert, &noise, t, samples, args.eta, args.trials, lambda)?;
    let report = json!({
        "certificate": cert,
        "bounds": bounds,
        "restricted_singular_value": rsv,
        "p_norms": { "check": p_check, "holds": p_check.holds() },
        "row_l1": { "bound": row_l1.bound, "max_row_l1": row_l1.row_l1.iter().copied().fold(0.0, f64::max), "all_pass": row_l1.all_pass() },
        "lambda_terms": terms,
    });
    write_json(&args.out, &report)?;
    print_json(&json!({
        "T": t,
        "N": samples,
        "rsv_success_rate": rsv.success_rate,
        "p_norms_hold": p_check.holds(),
        "row_l1_pass": row_l1.all_pass(),
        "lambda": lambda,
        "lambda_success_rate": terms.lambda_success_rate,
        "out": args.out,
    }));
    Ok(true)
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<bool> {
    let cfg = args.config.resolve(args.seed)?;
    let report = run_experiment(&cfg)?;
    let paths = write_outputs(&report)?;
    for f in &report.failures {
        eprintln!("cell failed: T={:?} N={:?} seed={} {:?}: {}", f.horizon, f.samples, f.seed, f.estimator.map(|e| e.name()), f.message);
    }
    print_json(&json!({ "records": report.records.len(), "failures": report.failures.len(), "files": paths }));
    Ok(report.ok())
}

fn cmd_emit(args: &EmitArgs) -> Result<bool> {
    let report = ExperimentReport::read(&args.report).with_context(|| format!("reading {}", args.report.display()))?;
    if let Some(bad) = args.group_by.iter().find(|k| !GROUP_KEYS.contains(&k.as_str())) {
        bail!("unknown group key `{bad}` ({})", GROUP_KEYS.join(", "));
    }
    let metrics = if args.metric.is_empty() { report.config.metrics.clone() } else { args.metric.clone() };
    let group: Vec<&str> = args.group_by.iter().map(String::as_str).collect();
    let mut files = Vec::new();
    for metric in &metrics {
        files.extend(emit_plot_data(&report, metric, &group, Path::new(&args.out))?);
    }
    print_json(&json!({ "files": files }));
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Realize(a) => cmd_realize(a),
        Command::VerifyTheory(a) => cmd_verify(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::EmitPlots(a) => cmd_emit(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
