#![allow(dead_code)]

use sparse_sysid::estimators::{lasso_objective, soft_threshold};
use sparse_sysid::linalg::spectral_norm;
use sparse_sysid::rng::{gaussian_vec, stream, Channel};
use sparse_sysid::{DMatrix, DVector};

/// Accelerated proximal gradient with adaptive restart, run until the
/// objective moves by less than `tol` (relative) over a full restart window.
pub fn prox_gradient(u: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, tol: f64) -> DVector<f64> {
    let n = u.nrows() as f64;
    let d = u.ncols();
    let lipschitz = spectral_norm(u).powi(2) / n;
    let step = 1.0 / lipschitz;
    let utu = u.tr_mul(u) / n;
    let uty = u.tr_mul(y) / n;
    let mut x = DVector::zeros(d);
    let mut z = x.clone();
    let mut t = 1.0_f64;
    let mut obj = lasso_objective(u, y, &x, lambda);
    let mut stall = 0;
    for _ in 0..2_000_000 {
        let grad = &utu * &z - &uty;
        let next = (&z - grad * step).map(|v| soft_threshold(v, step * lambda));
        let next_obj = lasso_objective(u, y, &next, lambda);
        if next_obj > obj {
            // Restart momentum.
            z = x.clone();
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = &next + (&next - &x) * ((t - 1.0) / t_next);
        let change = (obj - next_obj) / obj.max(f64::MIN_POSITIVE);
        x = next;
        t = t_next;
        obj = next_obj;
        stall = if change < tol { stall + 1 } else { 0 };
        if stall >= 50 {
            break;
        }
    }
    x
}

/// Gaussian design and response with a sparse ground truth.
pub fn lasso_instance(rows: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = stream(seed, Channel::Trial, 0);
    let u = DMatrix::from_column_slice(rows, d, gaussian_vec(&mut rng, rows * d, 1.0).as_slice());
    let mut g = DVector::zeros(d);
    for j in (0..d).step_by(3) {
        g[j] = 1.0 / (1.0 + j as f64);
    }
    let y = &u * &g + gaussian_vec(&mut rng, rows, 0.3);
    (u, y)
}
