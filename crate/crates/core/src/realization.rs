//! Higher-order Markov and Hankel matrices, and Ho-Kalman realization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::estimators::MarkovMatrix;
use crate::system::System;
use crate::{Error, Result};

/// Smallest admissible `σ_r / σ_1` when inverting the balanced factors.
pub const MIN_CONDITION: f64 = 1e-12;

pub const DEFAULT_SV_THRESHOLD: f64 = 1e-10;

/// `[Ĝ, 0_{m×(K−T)p}]`.
pub fn extend_markov(g: &MarkovMatrix, order: usize) -> Result<MarkovMatrix> {
    let t = g.order();
    if order < t {
        return Err(Error::InvalidArgument(format!("cannot extend order {t} Markov matrix to order {order}")));
    }
    let mut out = DMatrix::zeros(g.m(), order * g.p());
    out.columns_mut(0, t * g.p()).copy_from(g.matrix());
    MarkovMatrix::new(out, g.p())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Built from at least `2K − 1` true Markov blocks.
    True,
    /// Built from an order-`T` estimate; blocks with index sum `≥ T` are zero.
    ZeroPaddedEstimate,
}

/// Block Hankel matrix `H ∈ ℝ^{Km × Kp}` whose block `(i, j)` is Markov block `i + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    pub h: DMatrix<f64>,
    pub order: usize,
    pub m: usize,
    pub p: usize,
    pub provenance: Provenance,
}

impl HankelMatrix {
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.h.view((i * self.m, j * self.p), (self.m, self.p)).into_owned()
    }
}

/// Lays out `H^{(K)}`.
///
/// `Provenance::True` needs `g` to carry at least `2K − 1` blocks;
/// `Provenance::ZeroPaddedEstimate` needs `g.order() ≤ K` and fills
/// every block with index sum `≥ g.order()` with zeros.
pub fn build_hankel(g: &MarkovMatrix, order: usize, mode: Provenance) -> Result<HankelMatrix> {
    if order == 0 {
        return Err(Error::InvalidArgument("Hankel order must be positive".into()));
    }
    let available = g.order();
    match mode {
        Provenance::True if available < 2 * order - 1 => {
            return Err(Error::InsufficientBlocks { needed: 2 * order - 1, available });
        }
        Provenance::ZeroPaddedEstimate if available > order => {
            return Err(Error::InvalidArgument(format!("padded Hankel of order {order} from an order {available} estimate")));
        }
        _ => {}
    }
    let (m, p) = (g.m(), g.p());
    let mut h = DMatrix::zeros(order * m, order * p);
    for i in 0..order {
        for j in 0..order {
            let k = i + j;
            if k < available {
                h.view_mut((i * m, j * p), (m, p)).copy_from(&g.matrix().columns(k * p, p));
            }
        }
    }
    Ok(HankelMatrix { h, order, m, p, provenance: mode })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Realized order `r`.
    pub order: usize,
    /// All singular values of the shifted Hankel block, non-increasing.
    pub singular_values: Vec<f64>,
}

impl Realization {
    pub fn to_system(&self) -> Result<System> {
        System::new(self.a.clone(), self.b.clone(), self.c.clone(), self.d.clone())
    }

    /// `[D̂, ĈB̂, ĈÂB̂, …]` with `order` blocks.
    pub fn markov(&self, order: usize) -> Result<MarkovMatrix> {
        Ok(MarkovMatrix::from_system(&self.to_system()?, order))
    }
}

/// Near-square split of the `K − 1` non-feedthrough blocks: `(K₁, K₂)` with
/// `K₁ = ⌈(K−1)/2⌉` block rows and `K₂ = K − 1 − K₁` block columns.
pub fn hankel_split(order: usize) -> (usize, usize) {
    let rows = order / 2; // ⌈(K−1)/2⌉
    (rows, order.saturating_sub(1 + rows))
}

/// Balanced Ho-Kalman realization.
///
/// With `M_j = C A^j B` read from the first block row of `H`, forms the
/// `K₁ × K₂` block Hankel `H⁻` (block `(i, j)` = `M_{i+j}`) and its one-step
/// shift `H⁺` (`M_{i+j+1}`). From `H⁻ ≈ U_r Σ_r V_rᵀ`,
/// `O = U_r Σ_r^{1/2}`, `Q = Σ_r^{1/2} V_rᵀ`, `Ĉ` is the first block row of
/// `O`, `B̂` the first block column of `Q`, `Â = O⁺ H⁺ Q⁺`, and `D̂` is the
/// leading block of `H`.
///
/// `rank` forces the order; otherwise `r` counts singular values above
/// `sv_threshold · σ_max`.
pub fn ho_kalman(hankel: &HankelMatrix, rank: Option<usize>, sv_threshold: f64) -> Result<Realization> {
    let (k1, k2) = hankel_split(hankel.order);
    if k1 == 0 || k2 == 0 {
        return Err(Error::InsufficientBlocks { needed: 3, available: hankel.order });
    }
    let (m, p) = (hankel.m, hankel.p);
    let markov = |j: usize| hankel.block(0, j + 1);
    let mut minus = DMatrix::zeros(k1 * m, k2 * p);
    let mut plus = DMatrix::zeros(k1 * m, k2 * p);
    for i in 0..k1 {
        for j in 0..k2 {
            minus.view_mut((i * m, j * p), (m, p)).copy_from(&markov(i + j));
            plus.view_mut((i * m, j * p), (m, p)).copy_from(&markov(i + j + 1));
        }
    }

    let svd = minus.svd(true, true);
    let (u, vt) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let singular_values: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let smax = singular_values.first().copied().unwrap_or(0.0);

    let r = match rank {
        Some(r) if r > singular_values.len() => {
            return Err(Error::InvalidArgument(format!("rank {r} exceeds Hankel dimension {}", singular_values.len())));
        }
        Some(r) => r,
        None => singular_values.iter().filter(|&&s| s > sv_threshold * smax).count(),
    };
    if r == 0 || smax == 0.0 {
        return Err(Error::RankCollapse);
    }
    let cond = singular_values[r - 1] / smax;
    if cond < MIN_CONDITION {
        return Err(Error::IllConditioned(cond));
    }

    let mut o = DMatrix::zeros(k1 * m, r);
    let mut q = DMatrix::zeros(r, k2 * p);
    let mut o_pinv = DMatrix::zeros(r, k1 * m);
    let mut q_pinv = DMatrix::zeros(k2 * p, r);
    for (col, &i) in idx.iter().take(r).enumerate() {
        let s = svd.singular_values[i].sqrt();
        o.set_column(col, &(u.column(i) * s));
        q.set_row(col, &(vt.row(i) * s));
        o_pinv.set_row(col, &(u.column(i).transpose() / s));
        q_pinv.set_column(col, &(vt.row(i).transpose() / s));
    }
    let a = &o_pinv * &plus * &q_pinv;
    let c = o.rows(0, m).into_owned();
    let b = q.columns(0, p).into_owned();
    let d = hankel.block(0, 0);
    Ok(Realization { a, b, c, d, order: r, singular_values })
}

/// `‖G^{(K)}(r₁) − G^{(K)}(r₂)‖_F`, which is invariant under similarity transforms.
pub fn realization_distance(r1: &Realization, r2: &Realization, order: usize) -> Result<f64> {
    if r1.c.nrows() != r2.c.nrows() || r1.b.ncols() != r2.b.ncols() {
        return Err(Error::Dimension("realizations have different input/output sizes".into()));
    }
    Ok((r1.markov(order)?.matrix() - r2.markov(order)?.matrix()).norm())
}
