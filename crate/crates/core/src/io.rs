//! JSON containers for systems, Markov estimates, realizations and trajectories.
//!
//! `system.v1`:
//!
//! ```json
//! {
//!   "schema": "system.v1",
//!   "dims": { "n": 2, "m": 1, "p": 1 },
//!   "matrices": { "A": { "rows": 2, "cols": 2, "data": [0.5, 0.0, 0.0, 0.3] }, "B": …, "C": …, "D": … },
//!   "singular_values": [1.2, 0.4]
//! }
//! ```
//!
//! `data` is row-major. A system carries `A`, `B`, `C`, `D`; a Markov estimate
//! carries only `G` and omits `n`; a realization is a system plus
//! `singular_values`.
//!
//! `trajectory.v1` stores `inputs` (L×p), `outputs` (L×m), `states`
//! ((L+1)×n), `process_noise` (L×n) and `measurement_noise` (L×m) in the same
//! matrix record format, next to the `noise` scales and seed.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::estimators::MarkovMatrix;
use crate::realization::Realization;
use crate::system::{NoiseConfig, System, Trajectory};
use crate::{Error, Result};

pub const SYSTEM_SCHEMA: &str = "system.v1";
pub const TRAJECTORY_SCHEMA: &str = "trajectory.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::Schema(format!("{}×{} matrix with {} entries", self.rows, self.cols, self.data.len())));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub m: usize,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub schema: String,
    pub dims: Dims,
    pub matrices: BTreeMap<String, MatrixRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values: Option<Vec<f64>>,
}

impl SystemDocument {
    fn with(dims: Dims, entries: &[(&str, &DMatrix<f64>)]) -> Self {
        let matrices = entries.iter().map(|(k, m)| (k.to_string(), MatrixRecord::from_matrix(m))).collect();
        Self { schema: SYSTEM_SCHEMA.into(), dims, matrices, singular_values: None }
    }

    pub fn from_system(sys: &System) -> Self {
        let dims = Dims { n: Some(sys.n()), m: sys.m(), p: sys.p() };
        Self::with(dims, &[("A", &sys.a), ("B", &sys.b), ("C", &sys.c), ("D", &sys.d)])
    }

    pub fn from_markov(g: &MarkovMatrix) -> Self {
        Self::with(Dims { n: None, m: g.m(), p: g.p() }, &[("G", g.matrix())])
    }

    pub fn from_realization(r: &Realization) -> Self {
        let dims = Dims { n: Some(r.order), m: r.c.nrows(), p: r.b.ncols() };
        let mut doc = Self::with(dims, &[("A", &r.a), ("B", &r.b), ("C", &r.c), ("D", &r.d)]);
        doc.singular_values = Some(r.singular_values.clone());
        doc
    }

    fn check_schema(&self) -> Result<()> {
        if self.schema != SYSTEM_SCHEMA {
            return Err(Error::Schema(format!("expected schema {SYSTEM_SCHEMA}, found {}", self.schema)));
        }
        Ok(())
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        self.matrices.get(name).ok_or_else(|| Error::Schema(format!("missing matrix {name}")))?.to_matrix()
    }

    pub fn has_system(&self) -> bool {
        ["A", "B", "C", "D"].iter().all(|k| self.matrices.contains_key(*k))
    }

    pub fn to_system(&self) -> Result<System> {
        self.check_schema()?;
        let sys = System::new(self.matrix("A")?, self.matrix("B")?, self.matrix("C")?, self.matrix("D")?)?;
        if self.dims.n.is_some_and(|n| n != sys.n()) || self.dims.m != sys.m() || self.dims.p != sys.p() {
            return Err(Error::Schema("dims do not match matrices".into()));
        }
        Ok(sys)
    }

    pub fn to_markov(&self) -> Result<MarkovMatrix> {
        self.check_schema()?;
        let g = self.matrix("G")?;
        if g.nrows() != self.dims.m {
            return Err(Error::Schema("dims do not match G".into()));
        }
        MarkovMatrix::new(g, self.dims.p)
    }

    pub fn to_realization(&self) -> Result<Realization> {
        let sys = self.to_system()?;
        Ok(Realization { order: sys.n(), a: sys.a, b: sys.b, c: sys.c, d: sys.d, singular_values: self.singular_values.clone().unwrap_or_default() })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let doc: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        doc.check_schema()?;
        Ok(doc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDocument {
    pub schema: String,
    pub noise: NoiseConfig,
    pub matrices: BTreeMap<String, MatrixRecord>,
}

fn stack_rows(vs: &[DVector<f64>], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(vs.len(), width, |i, j| vs[i][j])
}

fn unstack_rows(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
    m.row_iter().map(|r| r.transpose()).collect()
}

impl TrajectoryDocument {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let (p, m, n) = (traj.inputs[0].len(), traj.outputs[0].len(), traj.states[0].len());
        let entries = [
            ("inputs", stack_rows(&traj.inputs, p)),
            ("outputs", stack_rows(&traj.outputs, m)),
            ("states", stack_rows(&traj.states, n)),
            ("process_noise", stack_rows(&traj.process_noise, n)),
            ("measurement_noise", stack_rows(&traj.measurement_noise, m)),
        ];
        let matrices = entries.iter().map(|(k, v)| (k.to_string(), MatrixRecord::from_matrix(v))).collect();
        Self { schema: TRAJECTORY_SCHEMA.into(), noise: traj.noise, matrices }
    }

    pub fn to_trajectory(&self) -> Result<Trajectory> {
        if self.schema != TRAJECTORY_SCHEMA {
            return Err(Error::Schema(format!("expected schema {TRAJECTORY_SCHEMA}, found {}", self.schema)));
        }
        let get = |k: &str| -> Result<Vec<DVector<f64>>> {
            Ok(unstack_rows(&self.matrices.get(k).ok_or_else(|| Error::Schema(format!("missing matrix {k}")))?.to_matrix()?))
        };
        let traj = Trajectory {
            inputs: get("inputs")?,
            states: get("states")?,
            process_noise: get("process_noise")?,
            measurement_noise: get("measurement_noise")?,
            outputs: get("outputs")?,
            noise: self.noise,
        };
        let l = traj.inputs.len();
        if l == 0 || traj.outputs.len() != l || traj.states.len() != l + 1 || traj.process_noise.len() != l || traj.measurement_noise.len() != l {
            return Err(Error::Schema("trajectory sequences have inconsistent lengths".into()));
        }
        Ok(traj)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::realization::{build_hankel, ho_kalman, Provenance};
    use crate::system::{random_system, simulate};

    #[test]
    fn system_round_trip() {
        let sys = random_system(3, 2, 4, 0.7, 1).unwrap();
        let doc = SystemDocument::from_system(&sys);
        let text = serde_json::to_string(&doc).unwrap();
        let back: SystemDocument = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_system().unwrap(), sys);
    }

    #[test]
    fn row_major_layout() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = MatrixRecord::from_matrix(&m);
        assert_eq!(r.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(r.to_matrix().unwrap(), m);
        assert!(MatrixRecord { rows: 2, cols: 2, data: vec![1.0] }.to_matrix().is_err());
    }

    #[test]
    fn file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let sys = random_system(5, 2, 2, 0.8, 2).unwrap();
        let g = MarkovMatrix::from_system(&sys, 13);
        let path = dir.path().join("g.json");
        SystemDocument::from_markov(&g).write(&path).unwrap();
        assert_eq!(SystemDocument::read(&path).unwrap().to_markov().unwrap(), g);

        let r = ho_kalman(&build_hankel(&g, 7, Provenance::True).unwrap(), None, 1e-10).unwrap();
        let path = dir.path().join("r.json");
        SystemDocument::from_realization(&r).write(&path).unwrap();
        let doc = SystemDocument::read(&path).unwrap();
        assert_eq!(doc.singular_values.as_ref(), Some(&r.singular_values));
        assert_eq!(doc.to_realization().unwrap(), r);

        let traj = simulate(&sys, &NoiseConfig::new(1.0, 0.1, 0.2, 3).unwrap(), 20).unwrap();
        let path = dir.path().join("t.json");
        TrajectoryDocument::from_trajectory(&traj).write(&path).unwrap();
        assert_eq!(TrajectoryDocument::read(&path).unwrap().to_trajectory().unwrap(), traj);
    }

    #[test]
    fn schema_errors() {
        let sys = random_system(2, 1, 1, 0.5, 0).unwrap();
        let mut doc = SystemDocument::from_system(&sys);
        assert!(doc.to_markov().is_err());
        doc.dims.m = 3;
        assert!(doc.to_system().is_err());
        doc.schema = "system.v0".into();
        assert!(matches!(doc.to_system(), Err(Error::Schema(_))));
    }
}
