//! The stacked regression problem.
//!
//! For horizon `T` and samples `t = T−1, …, T+N−2`,
//!
//! ```text
//! y_t = G ū_t + F w̄_t + e_t + v_t,   ū_t = [u_tᵀ, u_{t−1}ᵀ, …, u_{t−T+1}ᵀ]ᵀ
//! ```
//!
//! and stacking rows gives `Y = U Gᵀ + W Fᵀ + E + V`. The estimators only need
//! `(Y, U)`; `W`, `E`, `V`, `F` are assembled when the true system is known.

use std::path::Path;

use nalgebra::DMatrix;

use crate::system::{System, Trajectory};
use crate::{Error, Result};

/// Ground-truth pieces of the decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `N × Tn`, rows `w̄_t`.
    pub w: DMatrix<f64>,
    /// `N × m`, rows `e_t = C A^{T−1} x_{t−T+1}`.
    pub e: DMatrix<f64>,
    /// `N × m`, rows `v_t`.
    pub v: DMatrix<f64>,
    /// `m × Tn`, `[0, C, CA, …, CA^{T−2}]`.
    pub f: DMatrix<f64>,
    /// State dimension `n`.
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    /// `N × m` outputs.
    pub y: DMatrix<f64>,
    /// `N × Tp` stacked inputs, newest block first.
    pub u: DMatrix<f64>,
    pub diagnostics: Option<Diagnostics>,
    pub horizon: usize,
    pub p: usize,
}

impl RegressionData {
    pub fn samples(&self) -> usize {
        self.y.nrows()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// Number of regressors per output, `Tp`.
    pub fn width(&self) -> usize {
        self.u.ncols()
    }

    /// `q = p + n + m`, available when the true system was supplied.
    pub fn q(&self) -> Option<usize> {
        self.diagnostics.as_ref().map(|d| self.p + d.n + self.m())
    }

    /// Writes one headerless CSV per matrix (`Y.csv`, `U.csv`, and
    /// `W.csv`, `E.csv`, `V.csv`, `F.csv` when diagnostics exist) into `dir`.
    /// Each line is one matrix row, values in full `f64` round-trip precision.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_matrix_csv(&dir.join("Y.csv"), &self.y)?;
        write_matrix_csv(&dir.join("U.csv"), &self.u)?;
        if let Some(d) = &self.diagnostics {
            write_matrix_csv(&dir.join("W.csv"), &d.w)?;
            write_matrix_csv(&dir.join("E.csv"), &d.e)?;
            write_matrix_csv(&dir.join("V.csv"), &d.v)?;
            write_matrix_csv(&dir.join("F.csv"), &d.f)?;
        }
        Ok(())
    }
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Schema(format!("{}: {e}", path.display()))))
            .collect::<Result<_>>()?;
        match cols {
            None => cols = Some(vals.len()),
            Some(c) if c != vals.len() => return Err(Error::Schema(format!("{}: ragged rows", path.display()))),
            _ => {}
        }
        data.extend(vals);
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &data))
}

/// `F = [0, C, CA, …, CA^{T−2}] ∈ ℝ^{m × Tn}`.
pub fn build_f(sys: &System, horizon: usize) -> Result<DMatrix<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let (n, m) = (sys.n(), sys.m());
    let mut f = DMatrix::zeros(m, horizon * n);
    let mut block = sys.c.clone();
    for k in 1..horizon {
        f.view_mut((0, k * n), (m, n)).copy_from(&block);
        block = &block * &sys.a;
    }
    Ok(f)
}

/// Uses the whole trajectory: `N = L − T + 1`.
pub fn build_regression(traj: &Trajectory, sys: Option<&System>, horizon: usize) -> Result<RegressionData> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if traj.len() < horizon {
        return Err(Error::HorizonTooLong { horizon, length: traj.len() });
    }
    build_regression_prefix(traj, sys, horizon, traj.len() - horizon + 1)
}

/// Uses only the first `samples + horizon − 1` steps of the trajectory.
pub fn build_regression_prefix(traj: &Trajectory, sys: Option<&System>, horizon: usize, samples: usize) -> Result<RegressionData> {
    if horizon == 0 || samples == 0 {
        return Err(Error::InvalidArgument("horizon and sample count must be at least 1".into()));
    }
    let needed = samples + horizon - 1;
    if traj.len() < needed {
        return Err(Error::InvalidArgument(format!(
            "{samples} samples at horizon {horizon} need {needed} steps, trajectory has {}",
            traj.len()
        )));
    }
    let p = traj.inputs[0].len();
    let m = traj.outputs[0].len();
    let mut y = DMatrix::zeros(samples, m);
    let mut u = DMatrix::zeros(samples, horizon * p);
    for row in 0..samples {
        let t = horizon - 1 + row;
        y.row_mut(row).copy_from(&traj.outputs[t].transpose());
        for k in 0..horizon {
            u.view_mut((row, k * p), (1, p)).copy_from(&traj.inputs[t - k].transpose());
        }
    }

    let diagnostics = match sys {
        None => None,
        Some(sys) => {
            let n = sys.n();
            if sys.p() != p || sys.m() != m {
                return Err(Error::Dimension("system does not match trajectory".into()));
            }
            let f = build_f(sys, horizon)?;
            let mut obs = sys.c.clone();
            for _ in 1..horizon {
                obs = &obs * &sys.a;
            }
            let mut w = DMatrix::zeros(samples, horizon * n);
            let mut e = DMatrix::zeros(samples, m);
            let mut v = DMatrix::zeros(samples, m);
            for row in 0..samples {
                let t = horizon - 1 + row;
                for k in 0..horizon {
                    w.view_mut((row, k * n), (1, n)).copy_from(&traj.process_noise[t - k].transpose());
                }
                e.row_mut(row).copy_from(&(&obs * &traj.states[t + 1 - horizon]).transpose());
                v.row_mut(row).copy_from(&traj.measurement_noise[t].transpose());
            }
            Some(Diagnostics { w, e, v, f, n })
        }
    };
    Ok(RegressionData { y, u, diagnostics, horizon, p })
}
