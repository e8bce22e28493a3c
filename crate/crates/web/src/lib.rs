//! Browser bindings. Every entry point takes and returns a JSON string.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use sparse_sysid::design::build_regression_prefix;
use sparse_sysid::estimators::{estimate_lasso, estimate_ls, lambda_simulation, LassoConfig, MarkovMatrix};
use sparse_sysid::harness::{medians, run_experiment, sweep_horizon, Estimator, ExperimentConfig, HorizonPattern};
use sparse_sysid::realization::{build_hankel, ho_kalman, Provenance};
use sparse_sysid::rng::derive_seed;
use sparse_sysid::system::{generate_paper_system, simulate, NoiseConfig};

/// Relative singular value cutoff used to read an order off a noisy Hankel estimate.
pub const ORDER_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct DemoParams {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
    pub horizons: Vec<usize>,
    pub samples: Vec<usize>,
    pub sigma_w2: f64,
    pub sigma_v2: f64,
    pub trials: u64,
    pub seed: u64,
    pub hankel_order: usize,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            n: 20,
            m: 5,
            p: 5,
            horizon: 8,
            horizons: (2..13).collect(),
            samples: vec![20, 40, 80, 160],
            sigma_w2: 0.1,
            sigma_v2: 0.1,
            trials: 5,
            seed: 0,
            hankel_order: 8,
        }
    }
}

impl DemoParams {
    fn config(&self) -> ExperimentConfig {
        ExperimentConfig {
            n: self.n,
            m: self.m,
            p: self.p,
            horizons: vec![self.horizon],
            samples: self.samples.clone(),
            noise: vec![(self.sigma_w2, self.sigma_v2)],
            seeds: (0..self.trials.max(1)).collect(),
            base_seed: self.seed,
            metrics: vec!["markov_fro".into()],
            ..ExperimentConfig::desk()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonResult {
    pub tp: usize,
    pub curves: Vec<Curve>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub samples: usize,
    pub curve: Curve,
    pub pattern: HorizonPattern,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub curves: Vec<Curve>,
    pub realized_order: Option<usize>,
    pub lambda: f64,
}

fn parse(json: &str) -> Result<DemoParams, String> {
    if json.trim().is_empty() {
        return Ok(DemoParams::default());
    }
    serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Median Markov error against `N` for lasso and least squares.
pub fn compare_estimators_json(json: &str) -> Result<String, String> {
    let params = parse(json)?;
    let cfg = params.config();
    let report = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let rows = medians(&report, "markov_fro", &["estimator", "N"]).map_err(|e| e.to_string())?;
    let curves = [Estimator::Lasso, Estimator::Ls]
        .iter()
        .map(|est| {
            let (x, y) = rows.iter().filter(|r| r.key[0] == est.name()).map(|r| (r.key[1].parse::<f64>().unwrap_or(f64::NAN), r.median)).unzip();
            Curve { label: est.name().into(), x, y }
        })
        .collect();
    to_json(&ComparisonResult { tp: params.horizon * params.p, curves })
}

/// Median lasso error against `T` at the largest configured `N`.
pub fn horizon_sweep_json(json: &str) -> Result<String, String> {
    let params = parse(json)?;
    let samples = params.samples.iter().copied().max().ok_or("samples must be non-empty")?;
    let cfg = ExperimentConfig { horizons: params.horizons.clone(), samples: vec![samples], estimators: vec![Estimator::Lasso], ..params.config() };
    let sweep = sweep_horizon(&cfg).map_err(|e| e.to_string())?;
    let curve = Curve { label: "lasso".into(), x: sweep.horizons.iter().map(|&t| t as f64).collect(), y: sweep.medians };
    to_json(&SweepResult { samples, curve, pattern: sweep.pattern })
}

/// Hankel singular values of the true system and of both estimates.
pub fn hankel_spectrum_json(json: &str) -> Result<String, String> {
    let params = parse(json)?;
    let samples = params.samples.iter().copied().max().ok_or("samples must be non-empty")?;
    let (t, k) = (params.horizon, params.hankel_order.max(params.horizon).max(3));
    let err = |e: sparse_sysid::Error| e.to_string();
    let sys = generate_paper_system(params.n, params.m, params.p, 5, 0.8, derive_seed(params.seed, 0)).map_err(err)?;
    let noise = NoiseConfig::new(1.0, params.sigma_w2.sqrt(), params.sigma_v2.sqrt(), derive_seed(params.seed, 1)).map_err(err)?;
    let traj = simulate(&sys, &noise, samples + t - 1).map_err(err)?;
    let data = build_regression_prefix(&traj, None, t, samples).map_err(err)?;
    let lambda = lambda_simulation(noise.sigma_w, noise.sigma_v, t, params.p, params.n, samples);

    let spectrum = |g: &MarkovMatrix, mode: Provenance| -> Result<Vec<f64>, String> {
        let h = build_hankel(g, k, mode).map_err(err)?;
        let mut s: Vec<f64> = h.h.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        Ok(s)
    };
    let truth = MarkovMatrix::from_system(&sys, 2 * k - 1);
    let lasso = estimate_lasso(&data, &LassoConfig::with_lambda(lambda)).map_err(err)?.markov;
    let ls = estimate_ls(&data).map_err(err)?.markov;
    let realized_order = ho_kalman(&build_hankel(&lasso, k, Provenance::ZeroPaddedEstimate).map_err(err)?, None, ORDER_THRESHOLD).ok().map(|r| r.order);

    let mut curves = Vec::new();
    for (label, g, mode) in [("true", &truth, Provenance::True), ("lasso", &lasso, Provenance::ZeroPaddedEstimate), ("ls", &ls, Provenance::ZeroPaddedEstimate)] {
        let y = spectrum(g, mode)?;
        curves.push(Curve { label: label.into(), x: (1..=y.len()).map(|i| i as f64).collect(), y });
    }
    to_json(&SpectrumResult { curves, realized_order, lambda })
}

#[wasm_bindgen]
pub fn compare_estimators(json: &str) -> Result<String, JsValue> {
    compare_estimators_json(json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn horizon_sweep(json: &str) -> Result<String, JsValue> {
    horizon_sweep_json(json).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn hankel_spectrum(json: &str) -> Result<String, JsValue> {
    hankel_spectrum_json(json).map_err(|e| JsValue::from_str(&e))
}
