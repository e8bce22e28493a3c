//! Row-wise lasso by cyclic coordinate descent.
//!
//! The matrix problem `min_X ½N⁻¹‖Y − UXᵀ‖²_F + λ‖X‖_{1,1}` separates over
//! rows of `X`, so each output channel `i` is an independent vector lasso
//! `min_g ½N⁻¹‖Y_{:i} − Ug‖² + λ‖g‖₁`.

use nalgebra::{DMatrix, DVector};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::{kkt_from_gradient, MarkovMatrix};
use crate::design::RegressionData;
use crate::{Error, Result};

pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub lambda: f64,
    /// Relative objective decrease below which a sweep counts as converged.
    pub tol: f64,
    /// Largest coordinate change, relative to `max(1, ‖g‖_∞)`, allowed in a
    /// converged sweep.
    pub step_tol: f64,
    /// Maximum coordinate-descent sweeps.
    pub max_iters: usize,
    /// KKT residual required before a solution is reported as converged.
    pub kkt_tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self { lambda: 0.0, tol: 1e-10, step_tol: 1e-10, max_iters: 100_000, kkt_tol: 1e-6 }
    }
}

impl LassoConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self { lambda, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !(self.tol > 0.0) || !(self.step_tol > 0.0) || !(self.kkt_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidArgument(format!("invalid lasso config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub coef: DVector<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// False when `max_iters` ran out before the KKT check passed; `coef`
    /// is then the last iterate.
    pub converged: bool,
}

/// Design matrix with the per-column curvatures `‖U_{:j}‖²/N` precomputed,
/// shared read-only across rows and λ values.
#[derive(Debug, Clone)]
pub struct LassoDesign<'a> {
    u: &'a DMatrix<f64>,
    curvature: Vec<f64>,
}

impl<'a> LassoDesign<'a> {
    pub fn new(u: &'a DMatrix<f64>) -> Self {
        let n = u.nrows() as f64;
        let curvature = u.column_iter().map(|c| c.norm_squared() / n).collect();
        Self { u, curvature }
    }

    pub fn solve(&self, y: &DVector<f64>, cfg: &LassoConfig, warm_start: Option<&DVector<f64>>) -> Result<LassoSolution> {
        cfg.validate()?;
        let u = self.u;
        let (rows, d) = u.shape();
        if y.len() != rows {
            return Err(Error::Dimension(format!("y has {} entries, U has {rows} rows", y.len())));
        }
        let nf = rows as f64;
        let lambda = cfg.lambda;

        let mut g = match warm_start {
            Some(w) if w.len() != d => return Err(Error::Dimension(format!("warm start has {} entries, expected {d}", w.len()))),
            Some(w) => w.clone(),
            None => DVector::zeros(d),
        };
        let mut resid = y - u * &g;
        let objective = |r: &DVector<f64>, g: &DVector<f64>| 0.5 * r.norm_squared() / nf + lambda * g.lp_norm(1);
        let mut obj = objective(&resid, &g);
        let mut kkt = f64::INFINITY;
        let slack = 1e-14 * y.norm_squared() / nf;

        for sweep in 1..=cfg.max_iters {
            let mut step = 0.0_f64;
            for j in 0..d {
                let col = u.column(j);
                let cj = self.curvature[j];
                let old = g[j];
                let new = if cj > 0.0 { soft_threshold(col.dot(&resid) / nf + cj * old, lambda) / cj } else { 0.0 };
                if new != old {
                    step = step.max((new - old).abs());
                    resid.axpy(old - new, &col, 1.0);
                    g[j] = new;
                }
            }
            let next = objective(&resid, &g);
            debug_assert!(next <= obj * (1.0 + 1e-12) + slack, "objective increased: {obj} -> {next}");
            let decrease = (obj - next) / obj.max(f64::MIN_POSITIVE);
            obj = next;
            if decrease < cfg.tol && step <= cfg.step_tol * g.amax().max(1.0) {
                // Refresh the residual so accumulated updates do not bias the certificate.
                resid = y - u * &g;
                obj = objective(&resid, &g);
                let grad = -u.tr_mul(&resid) / nf;
                kkt = kkt_from_gradient(&grad, &g, lambda);
                if kkt <= cfg.kkt_tol {
                    return Ok(LassoSolution { coef: g, objective: obj, kkt_residual: kkt, iterations: sweep, converged: true });
                }
            }
        }
        if !kkt.is_finite() {
            let grad = -u.tr_mul(&(y - u * &g)) / nf;
            kkt = kkt_from_gradient(&grad, &g, lambda);
        }
        Ok(LassoSolution { coef: g, objective: obj, kkt_residual: kkt, iterations: cfg.max_iters, converged: kkt <= cfg.kkt_tol })
    }
}

/// Solves `min_g ½N⁻¹‖y − Ug‖² + λ‖g‖₁`.
pub fn lasso_row(u: &DMatrix<f64>, y: &DVector<f64>, cfg: &LassoConfig, warm_start: Option<&DVector<f64>>) -> Result<LassoSolution> {
    LassoDesign::new(u).solve(y, cfg, warm_start)
}

/// Solutions along a λ grid, each warm-started from the previous one.
pub fn lasso_path(u: &DMatrix<f64>, y: &DVector<f64>, lambdas: &[f64], cfg: &LassoConfig) -> Result<Vec<LassoSolution>> {
    let design = LassoDesign::new(u);
    let mut out: Vec<LassoSolution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let c = LassoConfig { lambda, ..*cfg };
        let sol = design.solve(y, &c, out.last().map(|s| &s.coef))?;
        out.push(sol);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct LassoEstimate {
    pub markov: MarkovMatrix,
    /// Per-row optimality certificates, in row order.
    pub rows: Vec<LassoSolution>,
    pub lambda: f64,
}

impl LassoEstimate {
    pub fn max_kkt_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.kkt_residual).fold(0.0, f64::max)
    }

    /// First row that failed to certify, as an error.
    pub fn ensure_converged(&self) -> Result<()> {
        match self.rows.iter().position(|r| !r.converged) {
            Some(row) => Err(Error::NotConverged { row, residual: self.rows[row].kkt_residual }),
            None => Ok(()),
        }
    }
}

/// Row `i` of `Ĝ` is the lasso fit of `Y_{:i}` on `U`. Rows are solved
/// independently (in parallel with the `parallel` feature).
pub fn estimate_lasso(data: &RegressionData, cfg: &LassoConfig) -> Result<LassoEstimate> {
    cfg.validate()?;
    let design = LassoDesign::new(&data.u);
    let m = data.m();
    let solve_row = |i: usize| -> Result<LassoSolution> { design.solve(&data.y.column(i).into_owned(), cfg, None) };

    #[cfg(feature = "parallel")]
    let rows: Vec<LassoSolution> = (0..m).into_par_iter().map(solve_row).collect::<Result<_>>()?;
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<LassoSolution> = (0..m).map(solve_row).collect::<Result<_>>()?;

    let mut g = DMatrix::zeros(m, data.width());
    for (i, r) in rows.iter().enumerate() {
        g.row_mut(i).copy_from(&r.coef.transpose());
    }
    Ok(LassoEstimate { markov: MarkovMatrix::new(g, data.p)?, rows, lambda: cfg.lambda })
}
