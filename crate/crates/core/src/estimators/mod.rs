//! Markov-parameter estimators: row-wise lasso, the minimum-norm
//! least-squares baseline, λ selection rules and error metrics.

mod lambda;
mod lasso;
mod ls;

pub use lambda::{lambda_simulation, lambda_theorem, LambdaRule};
pub use lasso::{estimate_lasso, lasso_path, lasso_row, soft_threshold, LassoConfig, LassoDesign, LassoEstimate, LassoSolution};
pub use ls::{estimate_ls, LsEstimate};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::linalg::spectral_norm;
use crate::system::System;
use crate::{Error, Result};

/// `G = [G_0 | G_1 | … | G_{K−1}] ∈ ℝ^{m × Kp}` with `G_0 = D` and
/// `G_k = C A^{k−1} B` for a true system.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovMatrix {
    g: DMatrix<f64>,
    p: usize,
}

impl MarkovMatrix {
    pub fn new(g: DMatrix<f64>, p: usize) -> Result<Self> {
        if p == 0 || g.ncols() % p != 0 || g.ncols() == 0 {
            return Err(Error::Dimension(format!("{} columns is not a positive multiple of p = {p}", g.ncols())));
        }
        Ok(Self { g, p })
    }

    /// `[D, CB, CAB, …, CA^{K−2}B]`.
    pub fn from_system(sys: &System, order: usize) -> Self {
        assert!(order >= 1, "Markov order must be positive");
        let (m, p) = (sys.m(), sys.p());
        let mut g = DMatrix::zeros(m, order * p);
        g.view_mut((0, 0), (m, p)).copy_from(&sys.d);
        let mut ca = sys.c.clone();
        for k in 1..order {
            g.view_mut((0, k * p), (m, p)).copy_from(&(&ca * &sys.b));
            ca = &ca * &sys.a;
        }
        Self { g, p }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.g
    }

    /// Number of blocks `K`.
    pub fn order(&self) -> usize {
        self.g.ncols() / self.p
    }

    pub fn m(&self) -> usize {
        self.g.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Block `k` (`k = 0` is the feedthrough `D`).
    pub fn block(&self, k: usize) -> DMatrix<f64> {
        self.g.columns(k * self.p, self.p).into_owned()
    }

    /// Row sums `‖G_{i:}‖₁`.
    pub fn row_l1(&self) -> Vec<f64> {
        self.g.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect()
    }
}

/// Error metrics of `Δ = G − Ĝ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    #[serde(skip)]
    pub delta: DMatrix<f64>,
    pub row_l2: Vec<f64>,
    pub norm_2inf: f64,
    pub norm_fro: f64,
    pub norm_spec: f64,
}

pub fn error_report(truth: &MarkovMatrix, estimate: &MarkovMatrix) -> Result<ErrorReport> {
    error_report_matrices(truth.matrix(), estimate.matrix())
}

/// Same metrics for any pair of equally shaped matrices (Hankel errors use this too).
pub fn error_report_matrices(truth: &DMatrix<f64>, estimate: &DMatrix<f64>) -> Result<ErrorReport> {
    if truth.shape() != estimate.shape() {
        return Err(Error::Dimension(format!("shape {:?} vs {:?}", truth.shape(), estimate.shape())));
    }
    let delta = truth - estimate;
    let row_l2: Vec<f64> = delta.row_iter().map(|r| r.norm()).collect();
    let norm_2inf = row_l2.iter().copied().fold(0.0, f64::max);
    let norm_fro = delta.norm();
    let norm_spec = spectral_norm(&delta);
    Ok(ErrorReport { delta, row_l2, norm_2inf, norm_fro, norm_spec })
}

/// `½N⁻¹‖y − Ug‖² + λ‖g‖₁`
pub fn lasso_objective(u: &DMatrix<f64>, y: &DVector<f64>, g: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - u * g;
    0.5 * r.norm_squared() / u.nrows() as f64 + lambda * g.lp_norm(1)
}

/// Largest violation of the lasso optimality conditions
/// `|∇_j| ≤ λ` for `g_j = 0` and `∇_j = −λ·sign(g_j)` otherwise,
/// where `∇ = N⁻¹Uᵀ(Ug − y)`.
pub fn kkt_residual(u: &DMatrix<f64>, y: &DVector<f64>, g: &DVector<f64>, lambda: f64) -> f64 {
    let grad = u.tr_mul(&(u * g - y)) / u.nrows() as f64;
    kkt_from_gradient(&grad, g, lambda)
}

pub(crate) fn kkt_from_gradient(grad: &DVector<f64>, g: &DVector<f64>, lambda: f64) -> f64 {
    grad.iter()
        .zip(g.iter())
        .map(|(&gr, &gj)| if gj == 0.0 { (gr.abs() - lambda).max(0.0) } else { (gr + lambda * gj.signum()).abs() })
        .fold(0.0, f64::max)
}
