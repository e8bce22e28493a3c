//! Grid experiments over horizon, sample size, noise level and seed.
//!
//! # Config format
//!
//! One `key = value` pair per line; `#` starts a comment. Lists are comma
//! separated and integer lists also accept half-open ranges `a..b`.
//!
//! | key | meaning | desk default |
//! |---|---|---|
//! | `preset` | starting point: `desk`, `desk-horizon`, `paper`, `paper-horizon`, `paper-noise` | `desk` |
//! | `n`, `m`, `p` | state, output and input dimensions | `40`, `10`, `10` |
//! | `horizons` | horizon grid `T` | `10` |
//! | `samples` | sample grid `N` | `40,80,160,320` |
//! | `noise` | `σ_w²:σ_v²` pairs | `0.1:0.1` |
//! | `seeds` | seed indices | `0..10` |
//! | `base_seed` | parent seed the indices are derived from | `0` |
//! | `lambda_rule` | `simulation`, `theorem:<c0>:<eps>` or `fixed:<value>` | `simulation` |
//! | `estimators` | subset of `lasso,ls` | `lasso,ls` |
//! | `metrics` | CSV files to emit | `markov_fro,markov_2inf,hankel_fro,hankel_2inf` |
//! | `outputs` | output directory | `results` |
//! | `sigma_u` | input standard deviation | `1` |
//! | `bandwidth` | half-bandwidth of `A` | `5` |
//! | `target_rho` | spectral radius of `A` | `0.8` |
//! | `hankel_order` | Hankel order `K` (`T` when absent or smaller) | absent |
//! | `tau_max` | range of the stability certificate | `200` |
//! | `lasso_max_iters` | coordinate-descent sweep budget per row | `100000` |
//!
//! Seed index `s` generates its system from `derive_seed(base_seed, s)`;
//! noise level `k` simulates with `derive_seed(system_seed, k + 1)`. One
//! trajectory of length `max N + max T − 1` serves every cell of a
//! (seed, noise) pair, each cell reading a prefix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::design::build_regression_prefix;
use crate::estimators::{error_report, error_report_matrices, estimate_lasso, estimate_ls, LambdaRule, LassoConfig, MarkovMatrix};
use crate::io::write_json;
use crate::linalg::median;
use crate::realization::{build_hankel, Provenance};
use crate::rng::derive_seed;
use crate::system::{certify_stability, generate_paper_system, simulate, NoiseConfig, StabilityCertificate, System};
use crate::theory::{eval_theory, DEFAULT_ETA};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Lasso,
    Ls,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Lasso => "lasso",
            Estimator::Ls => "ls",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lasso" => Ok(Estimator::Lasso),
            "ls" => Ok(Estimator::Ls),
            other => Err(Error::Config(format!("unknown estimator `{other}` (lasso | ls)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizons: Vec<usize>,
    pub samples: Vec<usize>,
    /// `(σ_w², σ_v²)` pairs.
    pub noise: Vec<(f64, f64)>,
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub lambda_rule: LambdaRule,
    pub estimators: Vec<Estimator>,
    pub metrics: Vec<String>,
    pub outputs: PathBuf,
    pub sigma_u: f64,
    pub bandwidth: usize,
    pub target_rho: f64,
    pub hankel_order: Option<usize>,
    pub tau_max: usize,
    /// Coordinate-descent sweep budget per lasso row.
    pub lasso_max_iters: usize,
}

pub const PRESETS: [&str; 5] = ["desk", "desk-horizon", "paper", "paper-horizon", "paper-noise"];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    pub fn desk() -> Self {
        Self {
            n: 40,
            m: 10,
            p: 10,
            horizons: vec![10],
            samples: vec![40, 80, 160, 320],
            noise: vec![(0.1, 0.1)],
            seeds: (0..10).collect(),
            base_seed: 0,
            lambda_rule: LambdaRule::Simulation,
            estimators: vec![Estimator::Lasso, Estimator::Ls],
            metrics: ["markov_fro", "markov_2inf", "hankel_fro", "hankel_2inf"].map(String::from).to_vec(),
            outputs: PathBuf::from("results"),
            sigma_u: 1.0,
            bandwidth: 5,
            target_rho: 0.8,
            hankel_order: None,
            tau_max: 200,
            lasso_max_iters: LassoConfig::default().max_iters,
        }
    }

    /// Horizon sweep at low noise and fixed `N`.
    pub fn desk_horizon() -> Self {
        Self { horizons: (2..17).collect(), samples: vec![200], noise: vec![(0.005, 0.005)], estimators: vec![Estimator::Lasso], ..Self::desk() }
    }

    pub fn paper() -> Self {
        Self {
            n: 200,
            m: 50,
            p: 50,
            horizons: vec![5, 10, 20],
            samples: vec![100, 200, 500, 1000, 2000],
            ..Self::desk()
        }
    }

    pub fn paper_horizon() -> Self {
        Self { horizons: (2..31).collect(), samples: vec![2000], noise: vec![(0.02, 0.02)], estimators: vec![Estimator::Lasso], ..Self::paper() }
    }

    pub fn paper_noise() -> Self {
        Self { horizons: vec![20], samples: vec![2000], noise: vec![(0.02, 0.02), (0.05, 0.05), (0.1, 0.1), (0.2, 0.2), (0.5, 0.5)], ..Self::paper() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name.trim() {
            "desk" => Ok(Self::desk()),
            "desk-horizon" => Ok(Self::desk_horizon()),
            "paper" => Ok(Self::paper()),
            "paper-horizon" => Ok(Self::paper_horizon()),
            "paper-noise" => Ok(Self::paper_noise()),
            other => Err(Error::Config(format!("unknown preset `{other}` ({})", PRESETS.join(" | ")))),
        }
    }

    /// Parses the flat key/value format. A `preset` line, wherever it appears,
    /// is applied before every other key.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            pairs.push((lineno + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let mut cfg = match pairs.iter().rev().find(|(_, k, _)| k == "preset") {
            Some((_, _, v)) => Self::preset(v)?,
            None => Self::desk(),
        };
        for (lineno, k, v) in pairs.iter().filter(|(_, k, _)| k != "preset") {
            cfg.set(k, v).map_err(|e| Error::Config(format!("line {lineno}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key}: cannot parse `{value}` as {what}"));
        let int = || value.parse::<usize>().map_err(|_| bad("an integer"));
        let float = || value.parse::<f64>().map_err(|_| bad("a number"));
        match key {
            "n" => self.n = int()?,
            "m" => self.m = int()?,
            "p" => self.p = int()?,
            "horizons" => self.horizons = parse_int_list(value)?.into_iter().map(|v| v as usize).collect(),
            "samples" => self.samples = parse_int_list(value)?.into_iter().map(|v| v as usize).collect(),
            "noise" => self.noise = parse_noise_list(value)?,
            "seeds" => self.seeds = parse_int_list(value)?,
            "base_seed" => self.base_seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
            "lambda_rule" => self.lambda_rule = value.parse()?,
            "estimators" => self.estimators = split_list(value).map(str::parse).collect::<Result<_>>()?,
            "metrics" => {
                self.metrics = split_list(value).map(String::from).collect();
                if let Some(bad) = self.metrics.iter().find(|m| !METRICS.contains(&m.as_str())) {
                    return Err(Error::UnknownMetric(bad.clone()));
                }
            }
            "outputs" => self.outputs = PathBuf::from(value),
            "sigma_u" => self.sigma_u = float()?,
            "bandwidth" => self.bandwidth = int()?,
            "target_rho" => self.target_rho = float()?,
            "hankel_order" => self.hankel_order = Some(int()?),
            "tau_max" => self.tau_max = int()?,
            "lasso_max_iters" => self.lasso_max_iters = int()?,
            "preset" => *self = Self::preset(value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.n == 0 || self.m == 0 || self.p == 0 {
            return fail("n, m and p must be positive");
        }
        if self.horizons.is_empty() || self.samples.is_empty() || self.noise.is_empty() || self.seeds.is_empty() || self.estimators.is_empty() {
            return fail("horizons, samples, noise, seeds and estimators must be non-empty");
        }
        if self.horizons.contains(&0) || self.samples.contains(&0) {
            return fail("horizons and samples must be positive");
        }
        if self.noise.iter().any(|&(w, v)| !(w >= 0.0 && v >= 0.0)) {
            return fail("noise variances must be nonnegative");
        }
        if self.lasso_max_iters == 0 {
            return fail("lasso_max_iters must be positive");
        }
        if !(self.sigma_u > 0.0) || !(self.target_rho > 0.0 && self.target_rho < 1.0) {
            return fail("need sigma_u > 0 and 0 < target_rho < 1");
        }
        Ok(())
    }

    /// The config in its own file format; `parse(to_kv())` reproduces it.
    pub fn to_kv(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "n = {}\nm = {}\np = {}", self.n, self.m, self.p);
        let _ = writeln!(s, "horizons = {}", join(self.horizons.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "samples = {}", join(self.samples.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "noise = {}", join(self.noise.iter().map(|(w, v)| format!("{w}:{v}")).collect()));
        let _ = writeln!(s, "seeds = {}", join(self.seeds.iter().map(|v| v.to_string()).collect()));
        let _ = writeln!(s, "base_seed = {}", self.base_seed);
        let _ = writeln!(s, "lambda_rule = {}", self.lambda_rule);
        let _ = writeln!(s, "estimators = {}", join(self.estimators.iter().map(|e| e.name().to_string()).collect()));
        let _ = writeln!(s, "metrics = {}", self.metrics.join(","));
        let _ = writeln!(s, "outputs = {}", self.outputs.display());
        let _ = writeln!(s, "sigma_u = {}\nbandwidth = {}\ntarget_rho = {}", self.sigma_u, self.bandwidth, self.target_rho);
        if let Some(k) = self.hankel_order {
            let _ = writeln!(s, "hankel_order = {k}");
        }
        let _ = writeln!(s, "tau_max = {}", self.tau_max);
        let _ = writeln!(s, "lasso_max_iters = {}", self.lasso_max_iters);
        s
    }

    fn system_seed(&self, seed: u64) -> u64 {
        derive_seed(self.base_seed, seed)
    }
}

fn split_list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_int_list(value: &str) -> Result<Vec<u64>> {
    let bad = |s: &str| Error::Config(format!("cannot parse `{s}` as an integer or range"));
    let mut out = Vec::new();
    for item in split_list(value) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad(item))?, b.trim().parse().map_err(|_| bad(item))?);
                out.extend(a..b);
            }
            None => out.push(item.parse().map_err(|_| bad(item))?),
        }
    }
    Ok(out)
}

fn parse_noise_list(value: &str) -> Result<Vec<(f64, f64)>> {
    split_list(value)
        .map(|item| {
            let bad = || Error::Config(format!("cannot parse `{item}` as sigma_w2:sigma_v2"));
            let (w, v) = item.split_once(':').ok_or_else(bad)?;
            Ok((w.trim().parse().map_err(|_| bad())?, v.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

/// JSON has no non-finite numbers; they are written as `null`.
fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn null_as_infinity<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Theory values attached to each record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    #[serde(deserialize_with = "null_as_nan")]
    pub e1: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub e2: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub bound_lasso_fro: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub bound_ls_fro: f64,
    #[serde(deserialize_with = "null_as_infinity")]
    pub t0: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub epsilon_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub sigma_w2: f64,
    pub sigma_v2: f64,
    pub seed: u64,
    pub estimator: Estimator,
    /// λ used; `0` for least squares.
    #[serde(deserialize_with = "null_as_nan")]
    pub lambda: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub markov_fro: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub markov_2inf: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub hankel_fro: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub hankel_2inf: f64,
    pub underdetermined: bool,
    pub converged: bool,
    pub wall_time_s: f64,
    pub theory: Option<TheorySummary>,
}

/// Metric names accepted by [`emit_plot_data`].
pub const METRICS: [&str; 9] = ["markov_fro", "markov_2inf", "hankel_fro", "hankel_2inf", "lambda", "theory_e1", "theory_e2", "bound_lasso_fro", "bound_ls_fro"];

impl Record {
    pub fn metric(&self, name: &str) -> Result<f64> {
        let theory = |f: fn(&TheorySummary) -> f64| self.theory.as_ref().map_or(f64::NAN, f);
        Ok(match name {
            "markov_fro" => self.markov_fro,
            "markov_2inf" => self.markov_2inf,
            "hankel_fro" => self.hankel_fro,
            "hankel_2inf" => self.hankel_2inf,
            "lambda" => self.lambda,
            "theory_e1" => theory(|t| t.e1),
            "theory_e2" => theory(|t| t.e2),
            "bound_lasso_fro" => theory(|t| t.bound_lasso_fro),
            "bound_ls_fro" => theory(|t| t.bound_ls_fro),
            other => return Err(Error::UnknownMetric(other.into())),
        })
    }

    fn sort_key(&self, other: &Self) -> std::cmp::Ordering {
        (self.horizon, self.samples)
            .cmp(&(other.horizon, other.samples))
            .then(self.sigma_w2.total_cmp(&other.sigma_w2))
            .then(self.sigma_v2.total_cmp(&other.sigma_v2))
            .then((self.seed, self.estimator).cmp(&(other.seed, other.estimator)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    #[serde(rename = "N")]
    pub samples: Option<usize>,
    pub sigma_w2: f64,
    pub sigma_v2: f64,
    pub seed: u64,
    pub estimator: Option<Estimator>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<Record>,
    pub failures: Vec<CellFailure>,
}

impl ExperimentReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    /// Reads a `report.json` written by [`write_outputs`].
    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

struct Timer(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Timer {
    fn start() -> Self {
        Timer(
            #[cfg(not(target_arch = "wasm32"))]
            std::time::Instant::now(),
        )
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

/// Runs every cell of the grid. Failing cells are recorded and skipped.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let jobs: Vec<(u64, usize)> = cfg.seeds.iter().flat_map(|&s| (0..cfg.noise.len()).map(move |k| (s, k))).collect();
    let run = |&(seed, k): &(u64, usize)| run_pair(cfg, seed, k);
    #[cfg(feature = "parallel")]
    let parts: Vec<(Vec<Record>, Vec<CellFailure>)> = jobs.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(Vec<Record>, Vec<CellFailure>)> = jobs.iter().map(run).collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in parts {
        records.extend(r);
        failures.extend(f);
    }
    records.sort_by(|a, b| a.sort_key(b));
    failures.sort_by(|a, b| {
        (a.horizon, a.samples, a.seed, a.estimator)
            .cmp(&(b.horizon, b.samples, b.seed, b.estimator))
            .then(a.sigma_w2.total_cmp(&b.sigma_w2))
            .then(a.sigma_v2.total_cmp(&b.sigma_v2))
    });
    Ok(ExperimentReport { config: cfg.clone(), records, failures })
}

fn run_pair(cfg: &ExperimentConfig, seed: u64, noise_index: usize) -> (Vec<Record>, Vec<CellFailure>) {
    let (sigma_w2, sigma_v2) = cfg.noise[noise_index];
    let fail = |horizon, samples, estimator, e: Error| CellFailure { horizon, samples, sigma_w2, sigma_v2, seed, estimator, message: e.to_string() };
    let system_seed = cfg.system_seed(seed);
    let setup = || -> Result<(System, NoiseConfig, StabilityCertificate)> {
        let sys = generate_paper_system(cfg.n, cfg.m, cfg.p, cfg.bandwidth, cfg.target_rho, system_seed)?;
        let noise = NoiseConfig::new(cfg.sigma_u, sigma_w2.sqrt(), sigma_v2.sqrt(), derive_seed(system_seed, noise_index as u64 + 1))?;
        let cert = certify_stability(&sys, &noise, cfg.tau_max)?;
        Ok((sys, noise, cert))
    };
    let (sys, noise, cert) = match setup() {
        Ok(v) => v,
        Err(e) => return (vec![], vec![fail(None, None, None, e)]),
    };
    let max_t = *cfg.horizons.iter().max().expect("validated");
    let max_n = *cfg.samples.iter().max().expect("validated");
    let traj = match simulate(&sys, &noise, max_n + max_t - 1) {
        Ok(t) => t,
        Err(e) => return (vec![], vec![fail(None, None, None, e)]),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &horizon in &cfg.horizons {
        let k = cfg.hankel_order.unwrap_or(horizon).max(horizon);
        let truth = MarkovMatrix::from_system(&sys, horizon);
        let truth_hankel = match build_hankel(&MarkovMatrix::from_system(&sys, 2 * k - 1), k, Provenance::True) {
            Ok(h) => h,
            Err(e) => {
                failures.push(fail(Some(horizon), None, None, e));
                continue;
            }
        };
        for &samples in &cfg.samples {
            let data = match build_regression_prefix(&traj, Some(&sys), horizon, samples) {
                Ok(d) => d,
                Err(e) => {
                    failures.push(fail(Some(horizon), Some(samples), None, e));
                    continue;
                }
            };
            let theory = eval_theory(&sys, &cert, &noise, horizon, samples, cfg.lambda_rule.epsilon(horizon), DEFAULT_ETA).ok().map(|t| TheorySummary {
                e1: t.theorem2.e1,
                e2: t.theorem2.e2,
                bound_lasso_fro: t.lasso_bound_fro,
                bound_ls_fro: t.theorem1.fro,
                t0: t.theorem2.t0,
                epsilon_tilde: t.epsilon_tilde,
            });
            let sigma_w_bar = cert.c_sys * cert.c_sys / (1.0 - cert.rho) * noise.sigma_w;
            for &estimator in &cfg.estimators {
                let timer = Timer::start();
                let fit = || -> Result<(MarkovMatrix, f64, bool, Option<Error>)> {
                    Ok(match estimator {
                        Estimator::Lasso => {
                            let lambda = cfg.lambda_rule.value(&noise, sigma_w_bar, horizon, cfg.p, cfg.n, samples);
                            let lasso = LassoConfig { lambda, max_iters: cfg.lasso_max_iters, ..LassoConfig::default() };
                            let est = estimate_lasso(&data, &lasso)?;
                            let stalled = est.ensure_converged().err();
                            (est.markov, lambda, false, stalled)
                        }
                        Estimator::Ls => {
                            let est = estimate_ls(&data)?;
                            (est.markov, 0.0, est.underdetermined, None)
                        }
                    })
                };
                let outcome = fit().and_then(|(g, lambda, under, stalled)| {
                    let err = error_report(&truth, &g)?;
                    let h = build_hankel(&g, k, Provenance::ZeroPaddedEstimate)?;
                    let herr = error_report_matrices(&truth_hankel.h, &h.h)?;
                    Ok((err, herr, lambda, under, stalled))
                });
                match outcome {
                    Ok((err, herr, lambda, underdetermined, stalled)) => {
                        let converged = stalled.is_none();
                        if let Some(e) = stalled {
                            failures.push(fail(Some(horizon), Some(samples), Some(estimator), e));
                        }
                        records.push(Record {
                            n: cfg.n,
                            m: cfg.m,
                            p: cfg.p,
                            horizon,
                            samples,
                            sigma_w2,
                            sigma_v2,
                            seed,
                            estimator,
                            lambda,
                            markov_fro: err.norm_fro,
                            markov_2inf: err.norm_2inf,
                            hankel_fro: herr.norm_fro,
                            hankel_2inf: herr.norm_2inf,
                            underdetermined,
                            converged,
                            wall_time_s: timer.seconds(),
                            theory,
                        });
                    }
                    Err(e) => failures.push(fail(Some(horizon), Some(samples), Some(estimator), e)),
                }
            }
        }
    }
    (records, failures)
}

pub const CSV_HEADER: [&str; 13] = ["n", "m", "p", "T", "N", "sigma_w2", "sigma_v2", "seed", "estimator", "lambda", "metric", "value", "underdetermined"];

/// Tidy CSV for one metric: one row per record, in report order.
pub fn plot_csv(report: &ExperimentReport, metric: &str) -> Result<String> {
    if !METRICS.contains(&metric) {
        return Err(Error::UnknownMetric(metric.into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &report.records {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.p.to_string(),
            r.horizon.to_string(),
            r.samples.to_string(),
            r.sigma_w2.to_string(),
            r.sigma_v2.to_string(),
            r.seed.to_string(),
            r.estimator.name().to_string(),
            r.lambda.to_string(),
            metric.to_string(),
            r.metric(metric)?.to_string(),
            r.underdetermined.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of ASCII fields"))
}

/// Columns a median table may be grouped by.
pub const GROUP_KEYS: [&str; 9] = ["n", "m", "p", "T", "N", "sigma_w2", "sigma_v2", "estimator", "underdetermined"];

fn group_value(r: &Record, key: &str) -> Result<String> {
    Ok(match key {
        "n" => r.n.to_string(),
        "m" => r.m.to_string(),
        "p" => r.p.to_string(),
        "T" => r.horizon.to_string(),
        "N" => r.samples.to_string(),
        "sigma_w2" => r.sigma_w2.to_string(),
        "sigma_v2" => r.sigma_v2.to_string(),
        "estimator" => r.estimator.name().to_string(),
        "underdetermined" => r.underdetermined.to_string(),
        other => return Err(Error::Config(format!("cannot group by `{other}` ({})", GROUP_KEYS.join(", ")))),
    })
}

/// One aggregated row: the group's key values, the median over its records, and their count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRow {
    pub key: Vec<String>,
    pub median: f64,
    pub count: usize,
}

/// Medians of `metric` within each group, in key order (numeric keys compared numerically).
pub fn medians(report: &ExperimentReport, metric: &str, group_by: &[&str]) -> Result<Vec<MedianRow>> {
    let mut groups: BTreeMap<Vec<GroupPart>, (Vec<String>, Vec<f64>)> = BTreeMap::new();
    for r in &report.records {
        let key: Vec<String> = group_by.iter().map(|k| group_value(r, k)).collect::<Result<_>>()?;
        let sort: Vec<GroupPart> = key.iter().map(|s| GroupPart::new(s)).collect();
        groups.entry(sort).or_insert_with(|| (key, Vec::new())).1.push(r.metric(metric)?);
    }
    Ok(groups.into_values().map(|(key, vals)| MedianRow { key, median: median(&vals), count: vals.len() }).collect())
}

/// Sort key that orders numbers numerically and everything else lexically.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum GroupPart {
    Num(f64),
    Text(String),
}

impl GroupPart {
    fn new(s: &str) -> Self {
        s.parse().map(GroupPart::Num).unwrap_or_else(|_| GroupPart::Text(s.into()))
    }
}

impl Eq for GroupPart {}

impl Ord for GroupPart {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self, other) {
            (GroupPart::Num(a), GroupPart::Num(b)) => a.total_cmp(b),
            (GroupPart::Num(_), GroupPart::Text(_)) => std::cmp::Ordering::Less,
            (GroupPart::Text(_), GroupPart::Num(_)) => std::cmp::Ordering::Greater,
            (GroupPart::Text(a), GroupPart::Text(b)) => a.cmp(b),
        }
    }
}

/// Writes `<metric>.csv` and, when `group_by` is non-empty,
/// `<metric>_median.csv` with one row per group. Returns the written paths.
pub fn emit_plot_data(report: &ExperimentReport, metric: &str, group_by: &[&str], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let tidy = dir.join(format!("{metric}.csv"));
    std::fs::write(&tidy, plot_csv(report, metric)?)?;
    let mut paths = vec![tidy];
    if !group_by.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<&str> = group_by.to_vec();
        header.extend(["metric", "median", "count"]);
        w.write_record(&header)?;
        for row in medians(report, metric, group_by)? {
            let mut rec = row.key.clone();
            rec.extend([metric.to_string(), row.median.to_string(), row.count.to_string()]);
            w.write_record(&rec)?;
        }
        let path = dir.join(format!("{metric}_median.csv"));
        std::fs::write(&path, w.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
        paths.push(path);
    }
    Ok(paths)
}

/// `report.json`, `config.txt` and one CSV per configured metric in `cfg.outputs`.
pub fn write_outputs(report: &ExperimentReport) -> Result<Vec<PathBuf>> {
    let dir = &report.config.outputs;
    std::fs::create_dir_all(dir)?;
    let mut paths = vec![dir.join("report.json"), dir.join("config.txt")];
    write_json(&paths[0], report)?;
    std::fs::write(&paths[1], report.config.to_kv())?;
    for metric in &report.config.metrics {
        paths.extend(emit_plot_data(report, metric, &["estimator", "T", "N", "sigma_w2", "sigma_v2"], dir)?);
    }
    Ok(paths)
}

/// Shape of a median error curve over the horizon grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum HorizonPattern {
    /// Fewer than four horizons; nothing is asserted.
    TooShort,
    /// Interior minimum below both endpoints.
    Valley { argmin: usize },
    Decreasing,
    Increasing,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSweep {
    pub estimator: Estimator,
    pub horizons: Vec<usize>,
    pub medians: Vec<f64>,
    pub pattern: HorizonPattern,
    pub report: ExperimentReport,
}

pub fn classify_horizon_curve(medians: &[f64]) -> HorizonPattern {
    let k = medians.len();
    if k < 4 {
        return HorizonPattern::TooShort;
    }
    let argmin = (0..k).min_by(|&a, &b| medians[a].total_cmp(&medians[b])).expect("non-empty");
    if medians.windows(2).all(|w| w[1] < w[0]) {
        HorizonPattern::Decreasing
    } else if medians.windows(2).all(|w| w[1] > w[0]) {
        HorizonPattern::Increasing
    } else if argmin > 0 && argmin < k - 1 && medians[argmin] < medians[0] && medians[argmin] < medians[k - 1] {
        HorizonPattern::Valley { argmin }
    } else {
        HorizonPattern::Other
    }
}

/// Runs a fixed-`N` horizon sweep and classifies the median `markov_fro` curve
/// of the first configured estimator.
pub fn sweep_horizon(cfg: &ExperimentConfig) -> Result<HorizonSweep> {
    if cfg.samples.len() != 1 {
        return Err(Error::Config("a horizon sweep needs exactly one sample size".into()));
    }
    let report = run_experiment(cfg)?;
    let estimator = cfg.estimators[0];
    let mut horizons = cfg.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let medians: Vec<f64> = horizons
        .iter()
        .map(|&t| median(&report.records.iter().filter(|r| r.horizon == t && r.estimator == estimator).map(|r| r.markov_fro).collect::<Vec<_>>()))
        .collect();
    Ok(HorizonSweep { estimator, pattern: classify_horizon_curve(&medians), horizons, medians, report })
}
