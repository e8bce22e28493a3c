//! Partially observed LTI systems
//!
//! ```text
//! x_{t+1} = A x_t + B u_t + w_t
//! y_t     = C x_t + D u_t + v_t
//! ```
//!
//! with `x ∈ ℝⁿ`, `u ∈ ℝᵖ`, `y ∈ ℝᵐ`, plus the banded synthetic generator,
//! single-trajectory simulation and the stability certificate
//! `‖Aᵗ‖₁ ≤ c_sys·ρᵗ` that the error bounds are expressed in.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::linalg::{norm_1, spectral_norm, spectral_radius};
use crate::rng::{gaussian_vec, stream, Channel};
use crate::{Error, Result};

/// Redraw budget for the synthetic generator.
pub const MAX_REDRAWS: usize = 16;

/// Tail tolerance for the truncated steady-state covariance sum.
pub const GAMMA_TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl System {
    /// Validates that `A: n×n`, `B: n×p`, `C: m×n`, `D: m×p`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(Error::Dimension(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        let p = b.ncols();
        let m = c.nrows();
        if b.nrows() != n || c.ncols() != n || d.nrows() != m || d.ncols() != p || m == 0 || p == 0 {
            return Err(Error::Dimension(format!(
                "inconsistent shapes A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Scalar system `(a, b, c, d)`, mostly for tests and examples.
    pub fn scalar(a: f64, b: f64, c: f64, d: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self { a: s(a), b: s(b), c: s(c), d: s(d) }
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Output dimension.
    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// Input dimension.
    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }
}

/// Input and noise scales, with the seed every draw derives from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_u: f64,
    pub sigma_w: f64,
    pub sigma_v: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(sigma_u: f64, sigma_w: f64, sigma_v: f64, seed: u64) -> Result<Self> {
        let cfg = Self { sigma_u, sigma_w, sigma_v, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Unit input, noise given as variances (the way experiment grids state them).
    pub fn from_variances(sigma_w2: f64, sigma_v2: f64, seed: u64) -> Result<Self> {
        if sigma_w2 < 0.0 || sigma_v2 < 0.0 {
            return Err(Error::InvalidArgument("noise variances must be nonnegative".into()));
        }
        Self::new(1.0, sigma_w2.sqrt(), sigma_v2.sqrt(), seed)
    }

    pub fn noiseless(seed: u64) -> Self {
        Self { sigma_u: 1.0, sigma_w: 0.0, sigma_v: 0.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_u > 0.0) || !(self.sigma_w >= 0.0) || !(self.sigma_v >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need sigma_u > 0 and sigma_w, sigma_v >= 0 (got {}, {}, {})",
                self.sigma_u, self.sigma_w, self.sigma_v
            )));
        }
        Ok(())
    }
}

/// One rollout from `x_0 = 0`. `states` has one more entry than the other sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub inputs: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub process_noise: Vec<DVector<f64>>,
    pub measurement_noise: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    pub noise: NoiseConfig,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Largest `‖x_{t+1} − (A x_t + B u_t + w_t)‖_∞` and
    /// `‖y_t − (C x_t + D u_t + v_t)‖_∞` over the rollout.
    pub fn replay_residual(&self, sys: &System) -> f64 {
        let mut worst = 0.0_f64;
        for t in 0..self.len() {
            let (x, u) = (&self.states[t], &self.inputs[t]);
            let next = &sys.a * x + &sys.b * u + &self.process_noise[t];
            let y = &sys.c * x + &sys.d * u + &self.measurement_noise[t];
            worst = worst.max((&self.states[t + 1] - next).amax()).max((&self.outputs[t] - y).amax());
        }
        worst
    }
}

/// Banded synthetic system.
///
/// * `A` has nonzeros on `|i − j| ≤ bandwidth`, drawn uniformly from
///   `[-0.5, 0.5]`, then rescaled so that `ρ(A) = target_rho`.
/// * `B_{ij} = 1` iff `i = 4j` (1-based), else 0.
/// * `C_{ij} ~ N(0, 1/m)`.
/// * `D = 0`.
///
/// A draw with `ρ(A) = 0` is discarded and redrawn with seed `seed + k`.
pub fn generate_paper_system(n: usize, m: usize, p: usize, bandwidth: usize, target_rho: f64, seed: u64) -> Result<System> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidArgument("dimensions must be positive".into()));
    }
    if !(target_rho > 0.0 && target_rho < 1.0) {
        return Err(Error::InvalidArgument(format!("target_rho must lie in (0, 1), got {target_rho}")));
    }
    let entry = Uniform::new_inclusive(-0.5, 0.5);
    for attempt in 0..MAX_REDRAWS {
        let draw_seed = seed.wrapping_add(attempt as u64);
        let mut rng = stream(draw_seed, Channel::System, 0);
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let lo = i.saturating_sub(bandwidth);
            let hi = (i + bandwidth).min(n - 1);
            for j in lo..=hi {
                a[(i, j)] = entry.sample(&mut rng);
            }
        }
        let rho = spectral_radius(&a);
        if !(rho > 0.0) || !rho.is_finite() {
            continue;
        }
        a *= target_rho / rho;

        let b = DMatrix::from_fn(n, p, |i, j| if i + 1 == 4 * (j + 1) { 1.0 } else { 0.0 });
        let normal = Normal::new(0.0, (1.0 / m as f64).sqrt()).expect("positive std");
        let mut rng = stream(draw_seed, Channel::System, 1);
        let c = DMatrix::from_fn(m, n, |_, _| normal.sample(&mut rng));
        let d = DMatrix::zeros(m, p);
        return System::new(a, b, c, d);
    }
    Err(Error::DegenerateDraw(MAX_REDRAWS))
}

/// Dense random system for tests and demos: `A` Gaussian rescaled to
/// spectral radius `rho`, `B`, `C`, `D` standard Gaussian.
pub fn random_system(n: usize, m: usize, p: usize, rho: f64, seed: u64) -> Result<System> {
    let mut rng = stream(seed, Channel::System, 7);
    let mut draw = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    let mut a = draw(n, n);
    let b = draw(n, p);
    let c = draw(m, n);
    let d = draw(m, p);
    let r = spectral_radius(&a);
    if r > 0.0 {
        a *= rho / r;
    }
    System::new(a, b, c, d)
}

/// Simulates `length` steps from `x_0 = 0`. Each input / noise vector comes
/// from its own (channel, t) random stream, so the same seed always replays
/// the same trajectory and longer rollouts extend shorter ones.
pub fn simulate(sys: &System, noise: &NoiseConfig, length: usize) -> Result<Trajectory> {
    noise.validate()?;
    if length == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let mut traj = Trajectory {
        inputs: Vec::with_capacity(length),
        states: Vec::with_capacity(length + 1),
        process_noise: Vec::with_capacity(length),
        measurement_noise: Vec::with_capacity(length),
        outputs: Vec::with_capacity(length),
        noise: *noise,
    };
    let mut x = DVector::zeros(n);
    for t in 0..length {
        let t64 = t as u64;
        let u = gaussian_vec(&mut stream(noise.seed, Channel::Input, t64), p, noise.sigma_u);
        let w = gaussian_vec(&mut stream(noise.seed, Channel::Process, t64), n, noise.sigma_w);
        let v = gaussian_vec(&mut stream(noise.seed, Channel::Measurement, t64), m, noise.sigma_v);
        let y = &sys.c * &x + &sys.d * &u + &v;
        let next = &sys.a * &x + &sys.b * &u + &w;
        traj.states.push(std::mem::replace(&mut x, next));
        traj.inputs.push(u);
        traj.process_noise.push(w);
        traj.measurement_noise.push(v);
        traj.outputs.push(y);
    }
    traj.states.push(x);
    Ok(traj)
}

/// Constants that certify exponential stability of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    /// Decay rate ρ (equal to the spectral radius).
    pub rho: f64,
    /// Smallest `c ≥ max{1, ‖B‖₁, ‖C‖₁, ‖D‖₁}` with `‖Aᵗ‖₁ ≤ c·ρᵗ` on the checked range.
    pub c_sys: f64,
    pub spectral_radius: f64,
    /// `max_τ ‖Aᵗ‖₂ / ρ(A)ᵗ` on the checked range.
    pub phi: f64,
    /// `‖Γ_∞‖₂` for the supplied noise scales.
    pub gamma_inf_norm: f64,
    pub tau_max: usize,
}

/// Evaluates the stability constants for `τ = 0..=tau_max`.
///
/// `Γ_∞ = Σᵢ Aⁱ(σ_w² I + σ_u² B Bᵀ)(Aᵀ)ⁱ` is truncated once the geometric tail
/// estimate `ρ^{2i}(σ_w² + σ_u²‖B‖₂²)Φ²/(1 − ρ²)` drops below 1e-12.
pub fn certify_stability(sys: &System, noise: &NoiseConfig, tau_max: usize) -> Result<StabilityCertificate> {
    let radius = sys.spectral_radius();
    if !(radius < 1.0) {
        return Err(Error::Unstable(radius));
    }
    let n = sys.n();
    let base = [1.0, norm_1(&sys.b), norm_1(&sys.c), norm_1(&sys.d)].into_iter().fold(0.0, f64::max);

    let (mut c_sys, mut phi) = (base, 1.0_f64);
    if radius > 0.0 {
        // Powers of A/ρ keep the ratio well scaled for large τ.
        let scaled = &sys.a / radius;
        let mut power = DMatrix::<f64>::identity(n, n);
        for tau in 0..=tau_max {
            if tau > 0 {
                power = &scaled * &power;
            }
            c_sys = c_sys.max(norm_1(&power));
            phi = phi.max(spectral_norm(&power));
        }
    } else {
        let mut power = DMatrix::<f64>::identity(n, n);
        for _ in 1..=tau_max.max(1) {
            power = &sys.a * &power;
            if power.amax() > 0.0 {
                return Err(Error::Nilpotent);
            }
        }
    }

    let q = DMatrix::<f64>::identity(n, n) * noise.sigma_w.powi(2) + (&sys.b * sys.b.transpose()) * noise.sigma_u.powi(2);
    let gamma_inf_norm = if q.amax() == 0.0 {
        0.0
    } else {
        let weight = (noise.sigma_w.powi(2) + noise.sigma_u.powi(2) * spectral_norm(&sys.b).powi(2)) * phi * phi;
        let denom = 1.0 - radius * radius;
        let mut sum = DMatrix::<f64>::zeros(n, n);
        let mut term = q;
        let mut i = 0_usize;
        loop {
            let tail = radius.powi(2 * i as i32) * weight / denom;
            if tail <= GAMMA_TAIL_TOL || i >= 1_000_000 {
                break;
            }
            sum += &term;
            term = &sys.a * &term * sys.a.transpose();
            i += 1;
        }
        spectral_norm(&sum)
    };

    Ok(StabilityCertificate { rho: radius, c_sys, spectral_radius: radius, phi, gamma_inf_norm, tau_max })
}

impl StabilityCertificate {
    /// Largest violation of `‖Aᵗ‖₁ ≤ c_sys·ρᵗ` over `τ = 0..=tau_max`
    /// (≤ 0 when the certificate holds), relative to `c_sys·ρᵗ`.
    pub fn worst_decay_violation(&self, sys: &System, tau_max: usize) -> f64 {
        let n = sys.n();
        let mut power = DMatrix::<f64>::identity(n, n);
        let mut worst = f64::NEG_INFINITY;
        for tau in 0..=tau_max {
            if tau > 0 {
                power = &sys.a * &power;
            }
            let envelope = self.c_sys * self.rho.powi(tau as i32);
            let lhs = norm_1(&power);
            let v = if envelope > 0.0 { lhs / envelope - 1.0 } else if lhs > 0.0 { f64::INFINITY } else { -1.0 };
            worst = worst.max(v);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_recurrence_by_hand() {
        let sys = System::scalar(0.5, 1.0, 1.0, 0.0);
        let mut traj = simulate(&sys, &NoiseConfig::noiseless(0), 3).unwrap();
        // Overwrite the random inputs with ones and replay the recurrence.
        let mut x = DVector::zeros(1);
        traj.states[0] = x.clone();
        for t in 0..3 {
            traj.inputs[t] = DVector::from_element(1, 1.0);
            traj.outputs[t] = &sys.c * &x + &sys.d * &traj.inputs[t];
            x = &sys.a * &x + &sys.b * &traj.inputs[t];
            traj.states[t + 1] = x.clone();
        }
        let ys: Vec<f64> = traj.outputs.iter().map(|y| y[0]).collect();
        assert_eq!(ys, vec![0.0, 1.0, 1.5]);
        assert_eq!(traj.replay_residual(&sys), 0.0);
    }

    #[test]
    fn simulate_replays_exactly() {
        let sys = random_system(6, 3, 2, 0.9, 11).unwrap();
        let noise = NoiseConfig::new(1.0, 0.3, 0.2, 5).unwrap();
        let traj = simulate(&sys, &noise, 200).unwrap();
        assert_eq!(traj.states[0], DVector::zeros(6));
        assert_eq!(traj.states.len(), 201);
        assert_eq!(traj.replay_residual(&sys), 0.0);
        assert_eq!(traj, simulate(&sys, &noise, 200).unwrap());
    }

    #[test]
    fn longer_rollout_extends_shorter() {
        let sys = random_system(4, 2, 2, 0.7, 3).unwrap();
        let noise = NoiseConfig::new(1.0, 0.1, 0.1, 9).unwrap();
        let short = simulate(&sys, &noise, 20).unwrap();
        let long = simulate(&sys, &noise, 50).unwrap();
        assert_eq!(&short.outputs[..], &long.outputs[..20]);
    }

    #[test]
    fn input_second_moment() {
        let sys = System::scalar(0.5, 1.0, 1.0, 0.0);
        let noise = NoiseConfig::new(1.7, 0.0, 0.0, 21).unwrap();
        let traj = simulate(&sys, &noise, 100_000).unwrap();
        let mean: f64 = traj.inputs.iter().map(|u| u.norm_squared()).sum::<f64>() / 100_000.0;
        assert!((mean / 1.7_f64.powi(2) - 1.0).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn rejects_bad_noise_and_length() {
        assert!(NoiseConfig::new(0.0, 0.1, 0.1, 0).is_err());
        assert!(NoiseConfig::new(1.0, -0.1, 0.1, 0).is_err());
        let sys = System::scalar(0.5, 1.0, 1.0, 0.0);
        assert!(simulate(&sys, &NoiseConfig::noiseless(0), 0).is_err());
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let r = System::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1));
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn generator_one_dimensional() {
        let sys = generate_paper_system(1, 1, 1, 0, 0.8, 4).unwrap();
        assert_relative_eq!(sys.a[(0, 0)].abs(), 0.8, epsilon = 1e-15);
        assert_eq!(sys.b[(0, 0)], 0.0);
        assert_eq!(sys.d[(0, 0)], 0.0);
    }

    #[test]
    fn generator_structure() {
        let sys = generate_paper_system(200, 50, 50, 5, 0.8, 1).unwrap();
        assert_relative_eq!(sys.spectral_radius(), 0.8, epsilon = 1e-10);
        // Exactly one unit entry per column of B, at row 4(j+1)-1.
        for j in 0..50 {
            let col = sys.b.column(j);
            assert_eq!(col.sum(), 1.0);
            assert_eq!(col[4 * (j + 1) - 1], 1.0);
        }
        for i in 0..200 {
            let nnz = (0..200).filter(|&j| sys.a[(i, j)] != 0.0).count();
            assert!((6..=11).contains(&nnz), "row {i} has {nnz} nonzeros");
            for j in 0..200 {
                if i.abs_diff(j) > 5 {
                    assert_eq!(sys.a[(i, j)], 0.0);
                }
            }
        }
        assert!(sys.d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn generator_rejects_bad_rho() {
        assert!(generate_paper_system(4, 2, 2, 1, 1.0, 0).is_err());
        assert!(generate_paper_system(4, 2, 2, 1, 0.0, 0).is_err());
    }

    #[test]
    fn certificate_scalar() {
        let sys = System::scalar(0.5, 1.0, 1.0, 1.0);
        let cert = certify_stability(&sys, &NoiseConfig::noiseless(0), 50).unwrap();
        assert_relative_eq!(cert.rho, 0.5);
        assert_relative_eq!(cert.c_sys, 1.0);
        assert_relative_eq!(cert.phi, 1.0);
        // Γ_∞ = σ_u² b² / (1 − a²) = 4/3
        assert_relative_eq!(cert.gamma_inf_norm, 4.0 / 3.0, epsilon = 1e-11);
    }

    #[test]
    fn certificate_diagonal_is_tight() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.8, 0.4]));
        let sys = System::new(a, DMatrix::from_element(2, 1, 0.5), DMatrix::from_element(1, 2, 0.5), DMatrix::zeros(1, 1)).unwrap();
        let cert = certify_stability(&sys, &NoiseConfig::noiseless(0), 100).unwrap();
        assert_relative_eq!(cert.rho, 0.8, epsilon = 1e-14);
        assert_relative_eq!(cert.c_sys, 1.0, epsilon = 1e-12);
        assert!(cert.worst_decay_violation(&sys, 100) <= 1e-12);
    }

    #[test]
    fn certificate_rejects_unstable() {
        let sys = System::scalar(1.1, 1.0, 1.0, 0.0);
        assert!(matches!(certify_stability(&sys, &NoiseConfig::noiseless(0), 10), Err(Error::Unstable(_))));
    }

    #[test]
    fn certificate_nilpotent() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let sys = System::new(a, DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(certify_stability(&sys, &NoiseConfig::noiseless(0), 10), Err(Error::Nilpotent)));
        let zero = System::scalar(0.0, 1.0, 1.0, 0.0);
        let cert = certify_stability(&zero, &NoiseConfig::noiseless(0), 10).unwrap();
        assert_eq!(cert.rho, 0.0);
        assert_eq!(cert.c_sys, 1.0);
    }

    #[test]
    fn certificate_paper_generator_holds() {
        let sys = generate_paper_system(40, 10, 10, 5, 0.8, 3).unwrap();
        let noise = NoiseConfig::from_variances(0.1, 0.1, 0).unwrap();
        let cert = certify_stability(&sys, &noise, 200).unwrap();
        assert!(cert.worst_decay_violation(&sys, 200) <= 1e-9);
        assert!(cert.c_sys >= norm_1(&sys.c));
        assert!(cert.phi >= 1.0 && cert.gamma_inf_norm > 0.0);
    }
}
