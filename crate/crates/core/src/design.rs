//! Synthesis of the learning matrix L and Q-filter Q.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::analysis::ConvergenceReport;
use crate::error::{Error, Result};
use crate::linalg::{RegularSolver, CONDITION_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMethod {
    QuadraticOptimal,
    PdLearning,
}

/// Scalar weights of the quadratic trial cost on error, input and input change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadOptWeights {
    pub s_e: f64,
    pub s_u: f64,
    pub s_du: f64,
}

impl QuadOptWeights {
    pub fn new(s_e: f64, s_u: f64, s_du: f64) -> Result<Self> {
        let w = QuadOptWeights { s_e, s_u, s_du };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_e > 0.0 && self.s_e.is_finite()) {
            return Err(Error::SingularDesign(format!(
                "s_e must be positive, got {}",
                self.s_e
            )));
        }
        for (name, v) in [("s_u", self.s_u), ("s_du", self.s_du)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::SingularDesign(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A learning law `u_{j+1} = Q(u_j + L e_j)` with its certificates.
#[derive(Debug, Clone)]
pub struct IlcDesign {
    pub l: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub method: DesignMethod,
    pub report: ConvergenceReport,
}

impl IlcDesign {
    /// Wraps given matrices after checking regularity and running the analysis.
    /// Does not require monotonic convergence.
    pub fn from_matrices(
        p: &DMatrix<f64>,
        l: DMatrix<f64>,
        q: DMatrix<f64>,
        method: DesignMethod,
    ) -> Result<Self> {
        check_regular("L", &l)?;
        check_regular("Q", &q)?;
        let report = ConvergenceReport::analyze(p, &l, &q)?;
        Ok(IlcDesign {
            l,
            q,
            method,
            report,
        })
    }

    /// PD-type learning with no Q-filter.
    pub fn pd(p: &DMatrix<f64>, kp: f64, kd: f64) -> Result<Self> {
        let n = p.nrows();
        let pd = pd_learning(LiftShape::new(n, 1), kp, kd);
        if !pd.regular {
            return Err(Error::SingularDesign(
                "PD learning matrix with kp + kd = 0 is singular".into(),
            ));
        }
        Self::from_matrices(
            p,
            pd.matrix,
            DMatrix::identity(n, n),
            DesignMethod::PdLearning,
        )
    }

    pub fn samples(&self) -> usize {
        self.l.nrows()
    }
}

fn check_regular(name: &str, m: &DMatrix<f64>) -> Result<()> {
    match RegularSolver::new(m) {
        Ok(s) if s.condition_estimate() < CONDITION_LIMIT => Ok(()),
        Ok(s) => Err(Error::SingularDesign(format!(
            "{name} condition estimate {:e} exceeds {CONDITION_LIMIT:e}",
            s.condition_estimate()
        ))),
        Err(Error::SingularPlant { condition }) => Err(Error::SingularDesign(format!(
            "{name} is numerically singular (condition estimate {condition:e})"
        ))),
        Err(e) => Err(e),
    }
}

fn spd_factor(g: &DMatrix<f64>, shift: f64, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = g.nrows();
    Cholesky::new(g + DMatrix::identity(n, n) * shift)
        .ok_or_else(|| Error::SingularDesign(format!("{what} is not positive definite")))
}

/// Norm-optimal design minimising `s_e‖e_{j+1}‖² + s_u‖u_{j+1}‖² + s_du‖u_{j+1} − u_j‖²`:
/// Q = (s_e PᵀP + (s_u + s_du) I)⁻¹ (s_e PᵀP + s_du I),
/// L = (s_e PᵀP + s_du I)⁻¹ s_e Pᵀ.
pub fn quadratic_optimal(p: &DMatrix<f64>, w: QuadOptWeights) -> Result<IlcDesign> {
    w.validate()?;
    let n = p.nrows();
    if p.ncols() != n {
        return Err(Error::dim(format!(
            "P must be square, got {}x{}",
            n,
            p.ncols()
        )));
    }
    let solver = RegularSolver::new(p)?;
    let g = p.transpose() * p * w.s_e;
    let identity = DMatrix::identity(n, n);

    // With s_du = 0 the normal equations collapse to L = P⁻¹; solve against P
    // directly instead of squaring its condition number.
    let l = if w.s_du == 0.0 {
        solver.solve(&identity)
    } else {
        let chol = spd_factor(&g, w.s_du, "s_e PᵀP + s_du I")?;
        chol.solve(&(p.transpose() * w.s_e))
    };
    // Q = I − s_u (s_e PᵀP + (s_u + s_du) I)⁻¹
    let q = if w.s_u == 0.0 {
        identity
    } else {
        let chol = spd_factor(&g, w.s_u + w.s_du, "s_e PᵀP + (s_u + s_du) I")?;
        &identity - chol.inverse() * w.s_u
    };
    if l.iter().chain(q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::SingularDesign("non-finite entries in L or Q".into()));
    }
    let design = IlcDesign::from_matrices(p, l, q, DesignMethod::QuadraticOptimal)?;
    if !(design.report.gamma2 < 1.0) {
        return Err(Error::DesignNotConvergent {
            gamma2: design.report.gamma2,
        });
    }
    Ok(design)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LiftShape {
    pub samples: usize,
    pub relative_degree: usize,
}

impl LiftShape {
    pub fn new(samples: usize, relative_degree: usize) -> Self {
        LiftShape {
            samples,
            relative_degree,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdLearning {
    pub matrix: DMatrix<f64>,
    pub regular: bool,
}

/// Lifted PD law `kp·e(n) + kd·(e(n) − e(n−1))`. The output is already shifted by
/// the relative degree, so the band sits on the main diagonal for every m.
pub fn pd_learning(shape: LiftShape, kp: f64, kd: f64) -> PdLearning {
    let n = shape.samples;
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            kp + kd
        } else if i == j + 1 {
            -kd
        } else {
            0.0
        }
    });
    PdLearning {
        matrix,
        regular: kp + kd != 0.0,
    }
}
