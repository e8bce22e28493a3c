//! Least-squares baseline `G̃ = argmin_X Σ_t ‖y_t − X ū_t‖²`.
//!
//! When `N < Tp` (or `U` is rank deficient) the problem has no unique
//! solution; the minimum-Frobenius-norm solution `Gᵀ = U⁺Y` is returned and
//! the estimate is flagged `underdetermined`.

use super::MarkovMatrix;
use crate::design::RegressionData;
use crate::Result;

#[derive(Debug, Clone)]
pub struct LsEstimate {
    pub markov: MarkovMatrix,
    pub underdetermined: bool,
    pub rank: usize,
}

pub fn estimate_ls(data: &RegressionData) -> Result<LsEstimate> {
    let (rows, width) = data.u.shape();
    let svd = data.u.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = f64::EPSILON * rows.max(width) as f64 * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let gt = if rank == 0 {
        nalgebra::DMatrix::zeros(width, data.m())
    } else {
        svd.solve(&data.y, eps).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?
    };
    Ok(LsEstimate {
        markov: MarkovMatrix::new(gt.transpose(), data.p)?,
        underdetermined: rows < width || rank < width,
        rank,
    })
}
