//! Dense linear-algebra helpers shared by the analysis and design layers.
//!
//! Everything works on `nalgebra` dynamic matrices. Lower-triangular operators
//! (the lifted LTI case) are solved by substitution; anything else goes through
//! an LU factorisation so time-varying or non-causal plants still work.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Condition-number ceiling above which an operator is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Which induced norm a quantity is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Two,
    Inf,
}

impl NormKind {
    pub fn vector(self, v: &DVector<f64>) -> f64 {
        match self {
            NormKind::Two => v.norm(),
            NormKind::Inf => inf_norm(v),
        }
    }

    pub fn matrix(self, m: &DMatrix<f64>) -> f64 {
        match self {
            NormKind::Two => spectral_norm(m),
            NormKind::Inf => induced_inf_norm(m),
        }
    }
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Maximum absolute row sum.
pub fn induced_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute column sum.
pub fn induced_one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_lower_triangular(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| ((i + 1)..m.ncols()).all(|j| m[(i, j)] == 0.0))
}

const POWER_RESTARTS: usize = 5;
const MAX_SQUARINGS: usize = 64;
const POWER_REL_TOL: f64 = 1e-15;
/// Seed used by [`spectral_norm`].
pub const DEFAULT_SEED: u64 = 0x005E_ED1C;

/// Largest singular value, estimated by power iteration on MᵀM.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    spectral_norm_seeded(m, DEFAULT_SEED)
}

/// [`spectral_norm`] with an explicit seed for the random restarts.
///
/// Each step squares the normalised Gram matrix, so after s steps every start
/// vector has been hit by (MᵀM)^(2^s). Clustered leading singular values then
/// separate in a few dozen matrix products rather than thousands of
/// matrix-vector products. The estimate ‖M·v‖ for unit v never exceeds σ_max.
pub fn spectral_norm_seeded(m: &DMatrix<f64>, seed: u64) -> f64 {
    let n = m.ncols();
    if n == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let mut g = m.transpose() * m;
    let scale = g.norm();
    if scale == 0.0 || !scale.is_finite() {
        return if scale == 0.0 { 0.0 } else { f64::NAN };
    }
    g /= scale;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<DVector<f64>> = (0..POWER_RESTARTS)
        .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)))
        .collect();
    let estimate = |g: &DMatrix<f64>| {
        starts
            .iter()
            .map(|v| {
                let w = g * v;
                let nw = w.norm();
                if nw == 0.0 {
                    0.0
                } else {
                    (m * (w / nw)).norm()
                }
            })
            .fold(0.0, f64::max)
    };

    let mut best = estimate(&g);
    for _ in 0..MAX_SQUARINGS {
        g = &g * &g;
        let f = g.norm();
        if f == 0.0 || !f.is_finite() {
            break;
        }
        g /= f;
        let e = estimate(&g);
        let settled = (e - best).abs() <= POWER_REL_TOL * e;
        best = best.max(e);
        if settled {
            break;
        }
    }
    best
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    Ok(crate::eig::eigenvalues(m)?
        .iter()
        .map(|&(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

enum Factor {
    Lower(DMatrix<f64>),
    Lu {
        lu: LU<f64, Dyn, Dyn>,
        lu_t: LU<f64, Dyn, Dyn>,
    },
}

/// A factorised regular operator supporting left and right solves.
pub struct RegularSolver {
    factor: Factor,
    n: usize,
    condition: f64,
}

impl RegularSolver {
    /// Factorises `p`, failing with [`Error::SingularPlant`] when the 1-norm
    /// condition estimate exceeds [`CONDITION_LIMIT`].
    pub fn new(p: &DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::dim(format!(
                "operator must be square, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        let n = p.nrows();
        let factor = if is_lower_triangular(p) {
            if p.diagonal().iter().any(|d| *d == 0.0 || !d.is_finite()) {
                return Err(Error::SingularPlant {
                    condition: f64::INFINITY,
                });
            }
            Factor::Lower(p.clone())
        } else {
            let lu = p.clone().lu();
            if !lu.is_invertible() {
                return Err(Error::SingularPlant {
                    condition: f64::INFINITY,
                });
            }
            Factor::Lu {
                lu,
                lu_t: p.transpose().lu(),
            }
        };
        let mut solver = RegularSolver {
            factor,
            n,
            condition: f64::INFINITY,
        };
        let inv_norm = solver.inverse_one_norm_estimate();
        let condition = induced_one_norm(p) * inv_norm;
        if !condition.is_finite() || condition > CONDITION_LIMIT {
            return Err(Error::SingularPlant { condition });
        }
        solver.condition = condition;
        Ok(solver)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    /// P⁻¹·b
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.factor {
            Factor::Lower(p) => p
                .solve_lower_triangular(b)
                .expect("diagonal checked nonzero"),
            Factor::Lu { lu, .. } => lu.solve(b).expect("LU checked invertible"),
        }
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Lower(p) => p
                .solve_lower_triangular(b)
                .expect("diagonal checked nonzero"),
            Factor::Lu { lu, .. } => lu.solve(b).expect("LU checked invertible"),
        }
    }

    /// P⁻ᵀ·b
    pub fn solve_transpose_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Lower(p) => p
                .tr_solve_lower_triangular(b)
                .expect("diagonal checked nonzero"),
            Factor::Lu { lu_t, .. } => lu_t.solve(b).expect("LU checked invertible"),
        }
    }

    /// X·P⁻¹, computed as (P⁻ᵀ·Xᵀ)ᵀ.
    pub fn solve_right(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let xt = x.transpose();
        let mt = match &self.factor {
            Factor::Lower(p) => p
                .tr_solve_lower_triangular(&xt)
                .expect("diagonal checked nonzero"),
            Factor::Lu { lu_t, .. } => lu_t.solve(&xt).expect("LU checked invertible"),
        };
        mt.transpose()
    }

    /// Hager/Higham estimate of ‖P⁻¹‖₁ using a handful of solves.
    fn inverse_one_norm_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0_f64;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve_vec(&x);
            est = est.max(y.lp_norm(1));
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let z = self.solve_transpose_vec(&xi);
            let (j, zmax) = z.iter().enumerate().fold((0, 0.0_f64), |(bj, bv), (i, v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bj, bv)
                }
            });
            if zmax <= z.dot(&x) || j == last_j {
                break;
            }
            last_j = j;
            x = DVector::zeros(n);
            x[j] = 1.0;
        }
        // Higham's alternating-sign safeguard.
        let alt = DVector::from_fn(n, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        });
        let alt_est = 2.0 * self.solve_vec(&alt).lp_norm(1) / (3.0 * n as f64);
        est.max(alt_est)
    }
}
