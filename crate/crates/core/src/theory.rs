//! Closed-form error bounds and Monte Carlo checks of the supporting inequalities.
//!
//! Every `≲` bound is evaluated with leading constant 1. Natural logarithms
//! throughout.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::design::{build_regression, RegressionData};
use crate::estimators::MarkovMatrix;
use crate::linalg::{norm_inf, quantile, spectral_norm, vec_l1};
use crate::rng::{derive_seed, gaussian_vec, stream, Channel};
use crate::system::{random_system, simulate, NoiseConfig, StabilityCertificate, System};
use crate::{Error, Result};

pub const DEFAULT_ETA: f64 = 1.0;

/// Quantile levels reported for every margin distribution.
pub const MARGIN_LEVELS: [f64; 7] = [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0];

fn check_dims(dims: &[(&str, usize)]) -> Result<()> {
    match dims.iter().find(|(_, v)| *v == 0) {
        Some((name, _)) => Err(Error::InvalidArgument(format!("{name} must be positive"))),
        None => Ok(()),
    }
}

fn check_stable(cert: &StabilityCertificate) -> Result<()> {
    if cert.rho < 1.0 {
        Ok(())
    } else {
        Err(Error::Unstable(cert.rho))
    }
}

/// `C_sys / (1 − ρ)`.
fn gain(cert: &StabilityCertificate) -> f64 {
    cert.c_sys / (1.0 - cert.rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem2Bounds {
    pub e1: f64,
    pub e2: f64,
    /// `σ̄_w = C_sys²σ_w/(1 − ρ)`.
    pub sigma_w_bar: f64,
    /// Minimum horizon with the `log(σ_w + σ_v)` term.
    pub t0: f64,
    /// Same expression with `log(σ_w + σ_u)`, as used when bounding λ.
    pub t0_input_variant: f64,
    /// Horizon needed by the initial-state term bound.
    pub lemma6_horizon: f64,
    /// Row ℓ1 bound `2C_sys³/(1 − ρ)`.
    pub r: f64,
    /// `σ_u²/4`.
    pub kappa: f64,
    /// `128σ_u²(C_sys³/(1 − ρ))²√(η log(Tp)/N)`.
    pub f_slack: f64,
    /// Sum of the three noise-term bounds; the smallest admissible λ.
    pub lambda_floor: f64,
    /// `N ≥ log²(Tp)`.
    pub samples_ok: bool,
    pub eta: f64,
    pub epsilon: f64,
}

/// `4√2 σ_uσ_w (C_sys²/(1−ρ)) √((1+η) log(Tpn)/N)`.
pub fn term1_bound(cert: &StabilityCertificate, noise: &NoiseConfig, t: usize, p: usize, n: usize, samples: usize, eta: f64) -> f64 {
    let l = ((t * p * n) as f64).ln();
    4.0 * 2f64.sqrt() * noise.sigma_u * noise.sigma_w * cert.c_sys * gain(cert) * ((1.0 + eta) * l / samples as f64).sqrt()
}

/// `2ρ^{T/2}(1+η)`.
pub fn term2_bound(rho: f64, t: usize, eta: f64) -> f64 {
    2.0 * rho.powf(t as f64 / 2.0) * (1.0 + eta)
}

/// `4σ_uσ_v √((1+η) log(Tp)/N)`.
pub fn term3_bound(noise: &NoiseConfig, t: usize, p: usize, samples: usize, eta: f64) -> f64 {
    let l = ((t * p) as f64).ln();
    4.0 * noise.sigma_u * noise.sigma_v * ((1.0 + eta) * l / samples as f64).sqrt()
}

/// `(log log(Np+Tp+Nn) + 4 log(C_sys/(1−ρ)) + 4 log(σ_w+σ_u) + 2 log 2)/(1−ρ) + 2`.
pub fn lemma6_horizon(cert: &StabilityCertificate, noise: &NoiseConfig, t: usize, p: usize, n: usize, samples: usize) -> f64 {
    let s = (samples * p + t * p + samples * n) as f64;
    (s.ln().ln() + 4.0 * gain(cert).ln() + 4.0 * (noise.sigma_w + noise.sigma_u).ln() + 2.0 * 2f64.ln()) / (1.0 - cert.rho) + 2.0
}

pub fn eval_theorem2_bounds(
    cert: &StabilityCertificate,
    noise: &NoiseConfig,
    t: usize,
    p: usize,
    n: usize,
    samples: usize,
    epsilon: f64,
    eta: f64,
) -> Result<Theorem2Bounds> {
    check_stable(cert)?;
    check_dims(&[("T", t), ("p", p), ("n", n), ("N", samples)])?;
    noise.validate()?;
    if !(epsilon >= 0.0) || !(eta > 0.0) {
        return Err(Error::InvalidArgument("need epsilon >= 0 and eta > 0".into()));
    }
    let (c, rho) = (cert.c_sys, cert.rho);
    let nf = samples as f64;
    let c3 = c.powi(3) / (1.0 - rho);
    let sigma_w_bar = c * gain(cert) * noise.sigma_w;
    let su = noise.sigma_u;
    let log_tpn = ((t * p * n) as f64).ln();
    let log_tp = ((t * p) as f64).ln();

    let e1 = c3.sqrt() * (((sigma_w_bar + noise.sigma_v) / su.powi(3)).sqrt() * (log_tpn / nf).powf(0.25) + epsilon / (su * su));
    let e2 = c3 * (log_tp / nf).powf(0.25);

    let loglog = ((samples * n + t * p) as f64).ln().ln();
    let t0_with = |noise_scale: f64| (loglog + gain(cert).ln() + noise_scale.ln() - epsilon.ln()) / (1.0 - rho);

    Ok(Theorem2Bounds {
        e1,
        e2,
        sigma_w_bar,
        t0: t0_with(noise.sigma_w + noise.sigma_v),
        t0_input_variant: t0_with(noise.sigma_w + noise.sigma_u),
        lemma6_horizon: lemma6_horizon(cert, noise, t, p, n, samples),
        r: 2.0 * c3,
        kappa: su * su / 4.0,
        f_slack: 128.0 * su * su * c3 * c3 * (eta * log_tp / nf).sqrt(),
        lambda_floor: term1_bound(cert, noise, t, p, n, samples, eta) + term2_bound(rho, t, eta) + term3_bound(noise, t, p, samples, eta),
        samples_ok: nf >= log_tp * log_tp,
        eta,
        epsilon,
    })
}

/// Least-squares error bound evaluated with unit constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Bound {
    /// `σ_e = Φ(A)‖CA^{T−1}‖₂ √(T‖Γ_∞‖/(1 − ρ^{2T}))`.
    pub sigma_e: f64,
    pub f_norm: f64,
    /// `q = p + n + m`.
    pub q: usize,
    /// `√(Tq log²(Tq) log²(Nq)/N)`.
    pub rate: f64,
    pub fro: f64,
    pub spec: f64,
    /// `Tq log²(Tq) log²(Nq)`.
    pub sample_requirement: f64,
    pub requirement_met: bool,
}

pub fn eval_theorem1_bound(cert: &StabilityCertificate, noise: &NoiseConfig, sys: &System, t: usize, samples: usize) -> Result<Theorem1Bound> {
    check_stable(cert)?;
    check_dims(&[("T", t), ("N", samples)])?;
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut ca = sys.c.clone();
    for _ in 1..t {
        ca = &ca * &sys.a;
    }
    let denom = 1.0 - cert.rho.powi(2 * t as i32);
    let sigma_e = cert.phi * spectral_norm(&ca) * (t as f64 * cert.gamma_inf_norm / denom).sqrt();
    let f_norm = spectral_norm(&crate::design::build_f(sys, t)?);
    let q = p + n + m;
    let (tq, nq) = ((t * q) as f64, (samples * q) as f64);
    let sample_requirement = tq * tq.ln().powi(2) * nq.ln().powi(2);
    let rate = (sample_requirement / samples as f64).sqrt();
    let su = noise.sigma_u;
    let fro = ((noise.sigma_v + sigma_e) * (m as f64).sqrt() + noise.sigma_w * f_norm) / su * rate;
    let spec = (noise.sigma_v + sigma_e + noise.sigma_w * f_norm) / su * rate;
    Ok(Theorem1Bound { sigma_e, f_norm, q, rate, fro, spec, sample_requirement, requirement_met: samples as f64 >= sample_requirement })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryBounds {
    pub theorem2: Theorem2Bounds,
    pub theorem1: Theorem1Bound,
    /// `√m (E1 ∨ E2)`.
    pub lasso_bound_fro: f64,
    /// `√m (E1 ∨ E2) / E^{LS}_F`.
    pub ratio: f64,
    /// `√‖C‖_∞ (C_sys/(1 − ρ)) ρ^{(T−1)/2}`, the truncation tail of higher-order Markov matrices.
    pub epsilon_tilde: f64,
}

pub fn eval_theory(sys: &System, cert: &StabilityCertificate, noise: &NoiseConfig, t: usize, samples: usize, epsilon: f64, eta: f64) -> Result<TheoryBounds> {
    let theorem2 = eval_theorem2_bounds(cert, noise, t, sys.p(), sys.n(), samples, epsilon, eta)?;
    let theorem1 = eval_theorem1_bound(cert, noise, sys, t, samples)?;
    let lasso_bound_fro = (sys.m() as f64).sqrt() * theorem2.e1.max(theorem2.e2);
    let epsilon_tilde = norm_inf(&sys.c).sqrt() * gain(cert) * cert.rho.powf((t as f64 - 1.0) / 2.0);
    Ok(TheoryBounds { theorem2, theorem1, lasso_bound_fro, ratio: lasso_bound_fro / theorem1.fro, epsilon_tilde })
}

/// `R(τ) = Σ_{k<(T−τ)p} θ_k θ_{k+τp}` for `τ = 0..T−1`.
pub fn autocorrelation(theta: &[f64], t: usize, p: usize) -> Result<Vec<f64>> {
    if theta.len() != t * p {
        return Err(Error::Dimension(format!("theta has {} entries, expected Tp = {}", theta.len(), t * p)));
    }
    Ok((0..t).map(|tau| (0..(t - tau) * p).map(|k| theta[k] * theta[k + tau * p]).sum()).collect())
}

/// Symmetric Toeplitz `P_ij = R(|i − j|)` (zero for lags `≥ T`), so that
/// `Uθ ~ N(0, σ_u² P(θ))`.
pub fn build_p(theta: &[f64], t: usize, p: usize, samples: usize) -> Result<DMatrix<f64>> {
    let r = autocorrelation(theta, t, p)?;
    Ok(DMatrix::from_fn(samples, samples, |i, j| r.get(i.abs_diff(j)).copied().unwrap_or(0.0)))
}

/// Norms of `P(θ)` next to their upper bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PNormCheck {
    pub trace: f64,
    /// `N‖θ‖²`.
    pub trace_expected: f64,
    pub spec: f64,
    /// `‖θ‖² + ‖θ‖₁²`.
    pub spec_bound: f64,
    pub fro_sq: f64,
    /// `N(‖θ‖² + ‖θ‖₁²)²`.
    pub fro_sq_bound: f64,
    /// `Σ_{τ≥1} |R(τ)|`.
    pub off_diagonal_mass: f64,
    /// `‖θ‖₁²`.
    pub off_diagonal_bound: f64,
}

impl PNormCheck {
    pub fn holds(&self) -> bool {
        self.spec <= self.spec_bound && self.fro_sq <= self.fro_sq_bound && self.off_diagonal_mass <= self.off_diagonal_bound
    }
}

pub fn p_norm_check(theta: &[f64], t: usize, p: usize, samples: usize) -> Result<PNormCheck> {
    let r = autocorrelation(theta, t, p)?;
    let pm = build_p(theta, t, p, samples)?;
    let l2 = r[0];
    let l1 = vec_l1(theta).powi(2);
    let spec = pm.clone().symmetric_eigen().eigenvalues.amax();
    Ok(PNormCheck {
        trace: pm.trace(),
        trace_expected: samples as f64 * l2,
        spec,
        spec_bound: l2 + l1,
        fro_sq: pm.norm_squared(),
        fro_sq_bound: samples as f64 * (l2 + l1).powi(2),
        off_diagonal_mass: r[1..].iter().map(|v| v.abs()).sum(),
        off_diagonal_bound: l1,
    })
}

/// Stacked input matrix `U ∈ ℝ^{N×Tp}` from a fresh white input sequence.
pub fn sample_input_design<R: Rng>(rng: &mut R, t: usize, p: usize, samples: usize, sigma_u: f64) -> DMatrix<f64> {
    let len = samples + t - 1;
    let seq = gaussian_vec(rng, len * p, sigma_u);
    DMatrix::from_fn(samples, t * p, |row, col| {
        let (block, c) = (col / p, col % p);
        seq[(t - 1 + row - block) * p + c]
    })
}

/// Test directions for the restricted singular value inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThetaSampler {
    /// Unit-norm vectors with magnitudes `decay^k` at shuffled positions and random signs.
    WeaklySparse { decay: f64 },
    /// Unit-norm isotropic Gaussian.
    Dense,
    /// First row of the order-`T` Markov matrix of a fresh random system.
    MarkovRows { n: usize, rho: f64 },
    Zero,
}

impl ThetaSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R, t: usize, p: usize, seed: u64) -> Result<DVector<f64>> {
        let d = t * p;
        let v = match *self {
            ThetaSampler::Zero => return Ok(DVector::zeros(d)),
            ThetaSampler::Dense => gaussian_vec(rng, d, 1.0),
            ThetaSampler::WeaklySparse { decay } => {
                if !(decay > 0.0 && decay < 1.0) {
                    return Err(Error::InvalidArgument(format!("decay must lie in (0, 1), got {decay}")));
                }
                let mut pos: Vec<usize> = (0..d).collect();
                for i in (1..d).rev() {
                    pos.swap(i, rng.gen_range(0..=i));
                }
                let mut v = DVector::zeros(d);
                for (k, &j) in pos.iter().enumerate() {
                    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                    v[j] = sign * decay.powi(k as i32);
                }
                v
            }
            ThetaSampler::MarkovRows { n, rho } => {
                let sys = random_system(n, 1, p, rho, seed)?;
                return Ok(MarkovMatrix::from_system(&sys, t).matrix().row(0).transpose());
            }
        };
        let norm = v.norm();
        Ok(if norm > 0.0 { v / norm } else { v })
    }
}

/// Monte Carlo report of one inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub lemma: String,
    pub params: Value,
    pub trials: usize,
    pub success_rate: f64,
    /// Quantiles of `bound − observed` (nonnegative means the inequality held).
    pub margin_quantiles: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypothesis_met: Option<bool>,
}

impl VerificationReport {
    fn from_margins(lemma: &str, params: Value, margins: &[f64], hypothesis_met: Option<bool>) -> Self {
        let ok = margins.iter().filter(|&&m| m >= 0.0).count();
        let margin_quantiles = MARGIN_LEVELS.iter().map(|&q| (format!("{q:.2}"), quantile(margins, q))).collect();
        Self {
            lemma: lemma.into(),
            params,
            trials: margins.len(),
            success_rate: if margins.is_empty() { 0.0 } else { ok as f64 / margins.len() as f64 },
            margin_quantiles,
            hypothesis_met,
        }
    }
}

/// Checks `(1/N)‖Uθ‖² ≥ (σ_u²/2)‖θ‖² − σ_u²√(η log(Tp)/N)‖θ‖₁²` on
/// independent `(U, θ)` draws. The hypothesis `N ≥ 4η log²(Tp)` is reported,
/// not enforced.
#[allow(clippy::too_many_arguments)]
pub fn verify_rsv(t: usize, p: usize, samples: usize, eta: f64, trials: usize, sampler: ThetaSampler, sigma_u: f64, seed: u64) -> Result<VerificationReport> {
    check_dims(&[("T", t), ("p", p), ("N", samples)])?;
    let log_tp = ((t * p) as f64).ln();
    let slack = (eta * log_tp / samples as f64).sqrt();
    let s2 = sigma_u * sigma_u;
    let mut margins = Vec::with_capacity(trials);
    for trial in 0..trials {
        let trial_seed = derive_seed(seed, trial as u64);
        let u = sample_input_design(&mut stream(trial_seed, Channel::Trial, 0), t, p, samples, sigma_u);
        let theta = sampler.sample(&mut stream(trial_seed, Channel::Trial, 1), t, p, trial_seed)?;
        let lhs = (&u * &theta).norm_squared() / samples as f64;
        let rhs = 0.5 * s2 * theta.norm_squared() - s2 * slack * theta.lp_norm(1).powi(2);
        margins.push(lhs - rhs);
    }
    let params = json!({ "T": t, "p": p, "N": samples, "eta": eta, "sigma_u": sigma_u, "sampler": sampler, "seed": seed });
    Ok(VerificationReport::from_margins("restricted-singular-value", params, &margins, Some(samples as f64 >= 4.0 * eta * log_tp * log_tp)))
}

/// The three noise correlations that λ must dominate, for one output row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseTerms {
    /// `2‖UᵀW F_{i:}ᵀ‖_∞/N`.
    pub process: f64,
    /// `2‖UᵀE_{:i}‖_∞/N`.
    pub initial_state: f64,
    /// `2‖UᵀV_{:i}‖_∞/N`.
    pub measurement: f64,
}

impl NoiseTerms {
    pub fn total(&self) -> f64 {
        self.process + self.initial_state + self.measurement
    }
}

pub fn noise_terms(data: &RegressionData) -> Result<Vec<NoiseTerms>> {
    let d = data.diagnostics.as_ref().ok_or_else(|| Error::InvalidArgument("noise terms need ground-truth diagnostics".into()))?;
    let nf = data.samples() as f64;
    let wf = &d.w * d.f.transpose();
    let scaled_max = |m: DMatrix<f64>| -> Vec<f64> { (0..m.ncols()).map(|i| 2.0 * data.u.tr_mul(&m.column(i)).amax() / nf).collect() };
    let (p1, p2, p3) = (scaled_max(wf), scaled_max(d.e.clone()), scaled_max(d.v.clone()));
    Ok((0..data.m()).map(|i| NoiseTerms { process: p1[i], initial_state: p2[i], measurement: p3[i] }).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaTermsReport {
    /// Process, initial-state and measurement terms against their bounds, over trials × rows.
    pub terms: [VerificationReport; 3],
    /// Fraction of trials × rows where λ dominates the sum of the three terms.
    pub lambda_success_rate: f64,
    pub lambda: f64,
    pub horizon_threshold: f64,
    pub threshold_met: bool,
    /// Per-trial medians over rows of each term.
    pub medians: Vec<NoiseTerms>,
}

/// Simulates `trials` independent rollouts and evaluates the three terms
/// on every output row.
#[allow(clippy::too_many_arguments)]
pub fn verify_lambda_terms(
    sys: &System,
    cert: &StabilityCertificate,
    noise: &NoiseConfig,
    t: usize,
    samples: usize,
    eta: f64,
    trials: usize,
    lambda: f64,
) -> Result<LambdaTermsReport> {
    check_stable(cert)?;
    check_dims(&[("T", t), ("N", samples)])?;
    let (n, p) = (sys.n(), sys.p());
    let bounds = [
        term1_bound(cert, noise, t, p, n, samples, eta),
        term2_bound(cert.rho, t, eta),
        term3_bound(noise, t, p, samples, eta),
    ];
    let mut margins: [Vec<f64>; 3] = Default::default();
    let mut lambda_ok = 0usize;
    let mut medians = Vec::with_capacity(trials);
    for trial in 0..trials {
        let trial_noise = NoiseConfig { seed: derive_seed(noise.seed, trial as u64), ..*noise };
        let traj = simulate(sys, &trial_noise, samples + t - 1)?;
        let data = build_regression(&traj, Some(sys), t)?;
        let rows = noise_terms(&data)?;
        for r in &rows {
            for (k, v) in [r.process, r.initial_state, r.measurement].into_iter().enumerate() {
                margins[k].push(bounds[k] - v);
            }
            lambda_ok += usize::from(r.total() <= lambda);
        }
        let med = |f: fn(&NoiseTerms) -> f64| crate::linalg::median(&rows.iter().map(f).collect::<Vec<_>>());
        medians.push(NoiseTerms { process: med(|r| r.process), initial_state: med(|r| r.initial_state), measurement: med(|r| r.measurement) });
    }
    let threshold = lemma6_horizon(cert, noise, t, p, n, samples);
    let params = json!({
        "T": t, "N": samples, "n": n, "m": sys.m(), "p": p, "eta": eta,
        "sigma_u": noise.sigma_u, "sigma_w": noise.sigma_w, "sigma_v": noise.sigma_v,
        "rho": cert.rho, "c_sys": cert.c_sys, "seed": noise.seed,
    });
    let names = ["process-noise-term", "initial-state-term", "measurement-noise-term"];
    let terms = std::array::from_fn(|k| {
        let mut params = params.clone();
        params["bound"] = json!(bounds[k]);
        VerificationReport::from_margins(names[k], params, &margins[k], Some(t as f64 >= threshold))
    });
    let total = trials * sys.m();
    Ok(LambdaTermsReport {
        terms,
        lambda_success_rate: if total == 0 { 0.0 } else { lambda_ok as f64 / total as f64 },
        lambda,
        horizon_threshold: threshold,
        threshold_met: t as f64 >= threshold,
        medians,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowL1Check {
    /// `2C_sys³/(1 − ρ)`.
    pub bound: f64,
    pub row_l1: Vec<f64>,
    /// `bound − ‖G_{i:}‖₁`.
    pub margins: Vec<f64>,
    pub pass: Vec<bool>,
}

impl RowL1Check {
    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|&b| b)
    }
}

pub fn check_row_l1(g: &MarkovMatrix, cert: &StabilityCertificate) -> RowL1Check {
    let bound = 2.0 * cert.c_sys.powi(3) / (1.0 - cert.rho);
    let row_l1 = g.row_l1();
    let margins: Vec<f64> = row_l1.iter().map(|v| bound - v).collect();
    let pass = margins.iter().map(|&m| m >= 0.0).collect();
    RowL1Check { bound, row_l1, margins, pass }
}

/// Empirical status of the three hypotheses of the deterministic row bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Assumptions {
    pub l1_bounded: bool,
    pub restricted_sv: bool,
    pub lambda_dominates: bool,
}

impl Assumptions {
    pub fn all(&self) -> bool {
        self.l1_bounded && self.restricted_sv && self.lambda_dominates
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeterministicCheck {
    /// `‖Δ_{i:}‖²`.
    pub error_sq: f64,
    /// `max{(2/κ)f, 88Rλ/κ²}`.
    pub threshold: f64,
    pub holds: bool,
    pub assumptions: Option<Assumptions>,
}

/// `‖Δ_{i:}‖² ≤ max{(2/κ)f, 88Rλ/κ²}`.
pub fn deterministic_bound(delta_row: &DVector<f64>, r: f64, kappa: f64, f_val: f64, lambda: f64) -> DeterministicCheck {
    let error_sq = delta_row.norm_squared();
    let threshold = (2.0 / kappa * f_val).max(88.0 * r * lambda / (kappa * kappa));
    DeterministicCheck { error_sq, threshold, holds: error_sq <= threshold, assumptions: None }
}

/// Evaluates the row bound for an estimate, together with the empirical
/// hypotheses it rests on.
#[allow(clippy::too_many_arguments)]
pub fn deterministic_check(
    data: &RegressionData,
    truth: &MarkovMatrix,
    estimate: &MarkovMatrix,
    row: usize,
    r: f64,
    kappa: f64,
    f_val: f64,
    lambda: f64,
) -> Result<DeterministicCheck> {
    if truth.matrix().shape() != estimate.matrix().shape() || row >= truth.m() {
        return Err(Error::Dimension("estimate, truth and row index disagree".into()));
    }
    let delta = (truth.matrix().row(row) - estimate.matrix().row(row)).transpose();
    let terms = noise_terms(data)?[row];
    let rsv_lhs = (&data.u * &delta).norm_squared() / data.samples() as f64;
    let assumptions = Assumptions {
        l1_bounded: truth.row_l1()[row] <= r,
        restricted_sv: rsv_lhs >= kappa * delta.norm_squared() - f_val,
        lambda_dominates: lambda >= terms.total(),
    };
    Ok(DeterministicCheck { assumptions: Some(assumptions), ..deterministic_bound(&delta, r, kappa, f_val, lambda) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate_lasso, LassoConfig};
    use crate::system::{certify_stability, generate_paper_system};
    use approx::assert_relative_eq;

    fn synthetic_cert(c_sys: f64, rho: f64) -> StabilityCertificate {
        StabilityCertificate { rho, c_sys, spectral_radius: rho, phi: 1.0, gamma_inf_norm: 1.0, tau_max: 0 }
    }

    fn reference_noise() -> NoiseConfig {
        NoiseConfig::new(1.0, 0.1f64.sqrt(), 0.1f64.sqrt(), 0).unwrap()
    }

    #[test]
    fn theorem2_reference_values() {
        let b = eval_theorem2_bounds(&synthetic_cert(2.0, 0.5), &reference_noise(), 10, 50, 200, 1000, 0.0, 1.0).unwrap();
        // mpmath, 30 digits: 2.21043459653953129…, 4.49234828732743933…
        assert_relative_eq!(b.e1, 2.210_434_596_539_531, epsilon = 1e-13);
        assert_relative_eq!(b.e2, 4.492_348_287_327_439, epsilon = 1e-13);
        assert_relative_eq!(b.r, 32.0);
        assert_relative_eq!(b.kappa, 0.25);
        // mpmath: 2583.19272123568350…
        assert_relative_eq!(b.f_slack, 2583.192_721_235_683_5, epsilon = 1e-9);
        assert!(b.t0.is_infinite());
    }

    #[test]
    fn theorem2_zero_noise_and_scaling() {
        let cert = synthetic_cert(2.0, 0.5);
        let quiet = NoiseConfig::noiseless(0);
        assert_eq!(eval_theorem2_bounds(&cert, &quiet, 10, 5, 20, 100, 0.0, 1.0).unwrap().e1, 0.0);
        let noise = reference_noise();
        let a = eval_theorem2_bounds(&cert, &noise, 10, 5, 20, 100, 0.0, 1.0).unwrap();
        let b = eval_theorem2_bounds(&cert, &noise, 10, 5, 20, 1600, 0.0, 1.0).unwrap();
        assert_relative_eq!(b.e1, a.e1 / 2.0, epsilon = 1e-14);
        assert_relative_eq!(b.e2, a.e2 / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn theorem2_monotone() {
        let noise = reference_noise();
        let mut last = f64::INFINITY;
        for n in [50, 100, 400, 2000] {
            let b = eval_theorem2_bounds(&synthetic_cert(2.0, 0.5), &noise, 10, 5, 20, n, 0.01, 1.0).unwrap();
            assert!(b.e1.max(b.e2) <= last);
            last = b.e1.max(b.e2);
        }
        let lo = eval_theorem2_bounds(&synthetic_cert(2.0, 0.5), &noise, 10, 5, 20, 100, 0.0, 1.0).unwrap();
        let hi = eval_theorem2_bounds(&synthetic_cert(3.0, 0.5), &noise, 10, 5, 20, 100, 0.0, 1.0).unwrap();
        assert!(hi.e1 >= lo.e1 && hi.e2 >= lo.e2);
        let slower = eval_theorem2_bounds(&synthetic_cert(2.0, 0.8), &noise, 10, 5, 20, 100, 0.0, 1.0).unwrap();
        assert!(slower.e1 >= lo.e1 && slower.e2 >= lo.e2);
    }

    #[test]
    fn theorem2_horizon_variants() {
        let noise = NoiseConfig::new(1.0, 0.3, 0.2, 0).unwrap();
        let b = eval_theorem2_bounds(&synthetic_cert(2.0, 0.5), &noise, 10, 5, 20, 100, 0.01, 1.0).unwrap();
        let loglog = ((100 * 20 + 50) as f64).ln().ln();
        let expected = (loglog + 4f64.ln() + 0.5f64.ln() + 100f64.ln()) / 0.5;
        assert_relative_eq!(b.t0, expected, epsilon = 1e-12);
        assert_relative_eq!(b.t0_input_variant - b.t0, (1.3f64.ln() - 0.5f64.ln()) / 0.5, epsilon = 1e-12);
    }

    #[test]
    fn theorem2_rejects_unstable() {
        let noise = reference_noise();
        assert!(matches!(eval_theorem2_bounds(&synthetic_cert(2.0, 1.0), &noise, 10, 5, 20, 100, 0.0, 1.0), Err(Error::Unstable(_))));
    }

    #[test]
    fn theorem1_noiseless_vanishes() {
        let sys = random_system(3, 2, 2, 0.5, 1).unwrap();
        let noise = NoiseConfig::noiseless(0);
        let cert = certify_stability(&sys, &noise, 100).unwrap();
        let short = eval_theorem1_bound(&cert, &noise, &sys, 10, 500).unwrap();
        let b = eval_theorem1_bound(&cert, &noise, &sys, 40, 500).unwrap();
        assert!(b.sigma_e < 1e-3 * short.sigma_e);
        assert!(b.fro < 1e-6, "{}", b.fro);
        assert_eq!(b.q, 7);
    }

    #[test]
    fn theorem1_matches_recomputation() {
        let sys = random_system(4, 3, 2, 0.6, 2).unwrap();
        let noise = NoiseConfig::new(1.0, 0.2, 0.3, 0).unwrap();
        let cert = certify_stability(&sys, &noise, 200).unwrap();
        let b = eval_theorem1_bound(&cert, &noise, &sys, 6, 800).unwrap();
        let q = 9.0_f64;
        let rate = (6.0 * q * (6.0 * q).ln().powi(2) * (800.0 * q).ln().powi(2) / 800.0).sqrt();
        assert_relative_eq!(b.rate, rate, epsilon = 1e-12);
        assert_relative_eq!(b.fro, ((0.3 + b.sigma_e) * 3f64.sqrt() + 0.2 * b.f_norm) * rate, epsilon = 1e-12);
        assert!(b.spec <= b.fro);
        // σ_e shrinks with the horizon.
        let longer = eval_theorem1_bound(&cert, &noise, &sys, 30, 800).unwrap();
        assert!(longer.sigma_e < b.sigma_e);
    }

    #[test]
    fn ratio_decreases_with_dimension() {
        // Stability constants held fixed while the dimensions grow.
        let cert = StabilityCertificate { rho: 0.5, c_sys: 2.0, spectral_radius: 0.5, phi: 1.0, gamma_inf_norm: 2.0, tau_max: 0 };
        let noise = reference_noise();
        let mut last = f64::INFINITY;
        for (n, mp) in [(10, 3), (20, 6), (40, 12), (80, 24)] {
            let sys = System::new(
                DMatrix::identity(n, n) * 0.5,
                DMatrix::identity(n, mp),
                DMatrix::identity(mp, n),
                DMatrix::zeros(mp, mp),
            )
            .unwrap();
            let th = eval_theory(&sys, &cert, &noise, 10, 200, 0.0, 1.0).unwrap();
            assert!(th.ratio < last, "ratio {} at n = {n}", th.ratio);
            last = th.ratio;
        }
    }

    #[test]
    fn epsilon_tilde_bounds_markov_tail() {
        let sys = random_system(4, 2, 2, 0.7, 4).unwrap();
        let cert = certify_stability(&sys, &NoiseConfig::noiseless(0), 300).unwrap();
        let th = eval_theory(&sys, &cert, &reference_noise(), 5, 100, 0.0, 1.0).unwrap();
        let g = MarkovMatrix::from_system(&sys, 200);
        let tail: f64 = (5..200).map(|k| crate::linalg::norm_2inf(&g.block(k))).sum();
        assert!(tail <= th.epsilon_tilde);
    }

    #[test]
    fn autocorrelation_examples() {
        assert_eq!(autocorrelation(&[1.0, 2.0, 3.0, 4.0], 2, 2).unwrap(), vec![30.0, 11.0]);
        assert!(autocorrelation(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn p_single_block_is_scaled_identity() {
        let theta = [0.5, -1.0, 2.0];
        let pm = build_p(&theta, 1, 3, 4).unwrap();
        assert_eq!(pm, DMatrix::identity(4, 4) * 5.25);
    }

    #[test]
    fn p_is_covariance_of_u_theta() {
        let (t, p, n) = (3, 2, 6);
        let theta = [0.8, -0.3, 0.5, 0.2, -0.4, 0.1];
        let pm = build_p(&theta, t, p, n).unwrap();
        let th = DVector::from_row_slice(&theta);
        let sigma_u = 1.5;
        let trials = 20_000;
        let mut cov = DMatrix::zeros(n, n);
        let mut sq = Vec::with_capacity(trials);
        for k in 0..trials {
            let u = sample_input_design(&mut stream(k as u64, Channel::Trial, 9), t, p, n, sigma_u);
            let z = &u * &th;
            cov += &z * z.transpose();
            sq.push(z.norm_squared() / (sigma_u * sigma_u));
        }
        cov /= trials as f64 * sigma_u * sigma_u;
        assert!((&cov - &pm).amax() < 0.05, "{cov} vs {pm}");
        let mean = sq.iter().sum::<f64>() / trials as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / trials as f64;
        assert_relative_eq!(mean, pm.trace(), max_relative = 0.03);
        assert_relative_eq!(var, 2.0 * pm.norm_squared(), max_relative = 0.08);
    }

    #[test]
    fn p_norms_within_bounds() {
        let mut rng = stream(11, Channel::Trial, 0);
        for _ in 0..20 {
            let theta: Vec<f64> = gaussian_vec(&mut rng, 12, 1.0).iter().copied().collect();
            let c = p_norm_check(&theta, 4, 3, 10).unwrap();
            assert!(c.holds());
            assert_relative_eq!(c.trace, c.trace_expected, max_relative = 1e-14);
        }
    }

    #[test]
    fn rsv_zero_theta_has_zero_margin() {
        let rep = verify_rsv(5, 4, 10, 1.0, 20, ThetaSampler::Zero, 1.0, 0).unwrap();
        assert_eq!(rep.success_rate, 1.0);
        assert!(rep.margin_quantiles.values().all(|&m| m == 0.0));
    }

    #[test]
    fn rsv_low_dimensional_always_holds() {
        let rep = verify_rsv(5, 4, 400, 1.0, 100, ThetaSampler::Dense, 1.0, 1).unwrap();
        assert_eq!(rep.success_rate, 1.0);
        assert_eq!(rep.hypothesis_met, Some(true));
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["lemma", "params", "trials", "success_rate", "margin_quantiles"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn input_design_is_shift_structured() {
        let u = sample_input_design(&mut stream(0, Channel::Trial, 0), 4, 3, 8, 1.0);
        for r in 0..7 {
            for c in 0..9 {
                assert_eq!(u[(r + 1, c + 3)], u[(r, c)]);
            }
        }
    }

    #[test]
    fn theta_samplers() {
        let mut rng = stream(0, Channel::Trial, 0);
        let v = ThetaSampler::WeaklySparse { decay: 0.7 }.sample(&mut rng, 4, 5, 0).unwrap();
        assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-14);
        let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        assert_relative_eq!(mags[1] / mags[0], 0.7, epsilon = 1e-12);
        let mr = ThetaSampler::MarkovRows { n: 3, rho: 0.5 }.sample(&mut rng, 4, 2, 7).unwrap();
        assert_eq!(mr.len(), 8);
        assert!(ThetaSampler::WeaklySparse { decay: 1.5 }.sample(&mut rng, 4, 5, 0).is_err());
    }

    #[test]
    fn noise_terms_vanish_without_noise() {
        let sys = random_system(4, 2, 2, 0.6, 3).unwrap();
        let noise = NoiseConfig::new(1.0, 0.0, 0.0, 5).unwrap();
        let cert = certify_stability(&sys, &noise, 100).unwrap();
        let rep = verify_lambda_terms(&sys, &cert, &noise, 6, 50, 1.0, 5, 1.0).unwrap();
        assert!(rep.medians.iter().all(|m| m.process == 0.0 && m.measurement == 0.0));
        assert_eq!(rep.terms[0].success_rate, 1.0);
        assert_eq!(rep.terms[2].success_rate, 1.0);
    }

    #[test]
    fn row_l1_examples() {
        let sys = System::scalar(0.5, 1.0, 1.0, 1.0);
        let cert = certify_stability(&sys, &NoiseConfig::noiseless(0), 50).unwrap();
        let c = check_row_l1(&MarkovMatrix::from_system(&sys, 30), &cert);
        assert_eq!(c.bound, 4.0);
        assert!(c.all_pass());
        let zero = System::new(DMatrix::from_element(1, 1, 0.5), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let c = check_row_l1(&MarkovMatrix::from_system(&zero, 5), &cert);
        assert_eq!(c.margins, vec![4.0]);
    }

    #[test]
    fn row_l1_generated_system() {
        let sys = generate_paper_system(40, 10, 10, 5, 0.5, 8).unwrap();
        let cert = certify_stability(&sys, &NoiseConfig::noiseless(0), 200).unwrap();
        assert!(check_row_l1(&MarkovMatrix::from_system(&sys, 50), &cert).all_pass());
    }

    #[test]
    fn deterministic_threshold_arithmetic() {
        let c = deterministic_bound(&DVector::zeros(3), 32.0, 0.25, 0.0, 0.01);
        assert_relative_eq!(c.threshold, 450.56, epsilon = 1e-10);
        assert!(c.holds);
        let big = deterministic_bound(&DVector::from_element(1, 21.3), 32.0, 0.25, 0.0, 0.01);
        assert!(!big.holds);
    }

    #[test]
    fn deterministic_bound_holds_on_pipeline() {
        let sys = generate_paper_system(12, 4, 4, 2, 0.5, 2).unwrap();
        let noise = NoiseConfig::from_variances(0.1, 0.1, 3).unwrap();
        let cert = certify_stability(&sys, &noise, 200).unwrap();
        let (t, n) = (8, 60);
        let data = build_regression(&simulate(&sys, &noise, n + t - 1).unwrap(), Some(&sys), t).unwrap();
        let truth = MarkovMatrix::from_system(&sys, t);
        let b = eval_theorem2_bounds(&cert, &noise, t, 4, 12, n, 0.0, 1.0).unwrap();
        let terms = noise_terms(&data).unwrap();
        let lambda = 1.01 * terms.iter().map(|r| r.total()).fold(0.0, f64::max);
        let est = estimate_lasso(&data, &LassoConfig::with_lambda(lambda)).unwrap();
        for row in 0..4 {
            let c = deterministic_check(&data, &truth, &est.markov, row, b.r, b.kappa, b.f_slack, lambda).unwrap();
            if c.assumptions.unwrap().all() {
                assert!(c.holds, "row {row}: {c:?}");
            }
            assert!(c.assumptions.unwrap().lambda_dominates);
        }
    }
}
