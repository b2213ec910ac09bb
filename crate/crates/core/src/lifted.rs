//! Discrete-time SISO plants and their lifted (trial-domain) representation.
//!
//! A trial of `N` samples is stacked into vectors so that the whole trial obeys
//! `y = P·u + d`, with `u = (u(0), …, u(N−1))` and the output shifted by the
//! relative degree `m`: `y = (y(m), …, y(m+N−1))`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance used to decide whether a Markov parameter vanishes.
const MARKOV_TOL: f64 = 1e-12;

/// x(n+1) = A·x(n) + B·u(n) + E·d(n),  y(n) = C·x(n)
///
/// `d(n)` is identical on every trial. `E` defaults to `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    relative_degree: usize,
    x0: DVector<f64>,
    disturbance: Vec<f64>,
    disturbance_map: DVector<f64>,
}

impl StateSpace {
    /// Validates shapes and that `m` really is the relative degree.
    pub fn new(
        a: DMatrix<f64>,
        b: DVector<f64>,
        c: DVector<f64>,
        relative_degree: usize,
    ) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k || k == 0 {
            return Err(Error::dim(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.len() != k || c.len() != k {
            return Err(Error::dim(format!(
                "B and C must have {k} entries, got {} and {}",
                b.len(),
                c.len()
            )));
        }
        if relative_degree == 0 {
            return Err(Error::RelativeDegreeMismatch {
                index: 0,
                value: 0.0,
                expected: "relative degree of at least 1",
            });
        }
        let ss = StateSpace {
            x0: DVector::zeros(k),
            disturbance_map: b.clone(),
            a,
            b,
            c,
            relative_degree,
            disturbance: Vec::new(),
        };
        ss.check_relative_degree()?;
        Ok(ss)
    }

    pub fn with_initial_state(mut self, x0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.order() {
            return Err(Error::dim(format!(
                "x0 must have {} entries, got {}",
                self.order(),
                x0.len()
            )));
        }
        self.x0 = x0;
        Ok(self)
    }

    /// Sets the trial-invariant disturbance sequence and, optionally, the
    /// direction it enters the state equation (defaults to `B`).
    pub fn with_disturbance(mut self, d: Vec<f64>, map: Option<DVector<f64>>) -> Result<Self> {
        if let Some(e) = map {
            if e.len() != self.order() {
                return Err(Error::dim(format!(
                    "disturbance map must have {} entries, got {}",
                    self.order(),
                    e.len()
                )));
            }
            self.disturbance_map = e;
        }
        self.disturbance = d;
        Ok(self)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }
    pub fn relative_degree(&self) -> usize {
        self.relative_degree
    }
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }
    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }
    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }
    pub fn disturbance(&self) -> &[f64] {
        &self.disturbance
    }
    pub fn disturbance_map(&self) -> &DVector<f64> {
        &self.disturbance_map
    }

    fn check_relative_degree(&self) -> Result<()> {
        let m = self.relative_degree;
        let scale = self.c.norm() * self.b.norm();
        let mut w = self.b.clone();
        let mut a_pow_norm = 1.0;
        let a_norm = self.a.norm();
        for i in 0..m {
            let h = self.c.dot(&w);
            let tol = MARKOV_TOL * scale * a_pow_norm;
            if i + 1 < m && h.abs() > tol {
                return Err(Error::RelativeDegreeMismatch {
                    index: i,
                    value: h,
                    expected: "zero below the relative degree",
                });
            }
            if i + 1 == m && (h.abs() <= tol || h == 0.0) {
                return Err(Error::RelativeDegreeMismatch {
                    index: i,
                    value: h,
                    expected: "nonzero first Markov parameter",
                });
            }
            w = &self.a * w;
            a_pow_norm *= a_norm.max(1.0);
        }
        Ok(())
    }

    /// Number of disturbance samples a trial of length `n` consumes.
    fn steps(&self, n: usize) -> usize {
        n + self.relative_degree - 1
    }

    fn check_trial(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::dim("trial length N must be at least 1"));
        }
        if !self.disturbance.is_empty() && self.disturbance.len() < self.steps(n) {
            return Err(Error::dim(format!(
                "disturbance has {} samples, a trial of N = {n} with m = {} needs {}",
                self.disturbance.len(),
                self.relative_degree,
                self.steps(n)
            )));
        }
        Ok(())
    }

    /// Steps the difference equation over one trial and returns the lifted
    /// output `(y(m), …, y(m+N−1))`. Inputs beyond the lifted window are zero.
    pub fn simulate(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = u.len();
        self.check_trial(n)?;
        let m = self.relative_degree;
        let mut x = self.x0.clone();
        let mut y = DVector::zeros(n);
        let mut next = DVector::zeros(self.order());
        for step in 0..self.steps(n) {
            let u_n = if step < n { u[step] } else { 0.0 };
            let d_n = self.disturbance.get(step).copied().unwrap_or(0.0);
            next.gemv(1.0, &self.a, &x, 0.0);
            next.axpy(u_n, &self.b, 1.0);
            next.axpy(d_n, &self.disturbance_map, 1.0);
            std::mem::swap(&mut x, &mut next);
            // x now holds x(step + 1)
            let sample = step + 1;
            if sample >= m {
                y[sample - m] = self.c.dot(&x);
            }
        }
        Ok(y)
    }

    /// Markov parameters C·A^(i+m−1)·B for i = 0..n, one matrix-vector product each.
    pub fn markov_parameters(&self, n: usize) -> Vec<f64> {
        let mut w = self.b.clone();
        for _ in 1..self.relative_degree {
            w = &self.a * w;
        }
        let mut h = Vec::with_capacity(n);
        for _ in 0..n {
            h.push(self.c.dot(&w));
            w = &self.a * w;
        }
        h
    }
}

/// Which signal a [`Trajectory`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Input,
    Output,
    Reference,
    Error,
}

/// A lifted signal tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub values: DVector<f64>,
    pub kind: SignalKind,
}

impl Trajectory {
    pub fn new(values: DVector<f64>, kind: SignalKind) -> Self {
        Trajectory { values, kind }
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Runs one trial of `ss` on input `u`, checking that `u` is an input of length `n`.
pub fn simulate_trial(ss: &StateSpace, u: &Trajectory, n: usize) -> Result<Trajectory> {
    if u.kind != SignalKind::Input {
        return Err(Error::dim(format!(
            "expected an input trajectory, got {:?}",
            u.kind
        )));
    }
    if u.len() != n {
        return Err(Error::dim(format!(
            "input has {} samples, trial has {n}",
            u.len()
        )));
    }
    Ok(Trajectory::new(ss.simulate(&u.values)?, SignalKind::Output))
}

/// Lifted plant `y = P·u + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPlant {
    p: DMatrix<f64>,
    d: DVector<f64>,
    relative_degree: usize,
}

impl LiftedPlant {
    /// Wraps an explicit plant matrix and lifted disturbance. `p` need not be
    /// Toeplitz, which covers time-varying plants.
    pub fn new(p: DMatrix<f64>, d: DVector<f64>, relative_degree: usize) -> Result<Self> {
        if p.nrows() != p.ncols() || p.nrows() == 0 {
            return Err(Error::dim(format!(
                "P must be square and non-empty, got {}x{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if d.len() != p.nrows() {
            return Err(Error::dim(format!(
                "d has {} entries, P is {}x{}",
                d.len(),
                p.nrows(),
                p.ncols()
            )));
        }
        Ok(LiftedPlant {
            p,
            d,
            relative_degree,
        })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }
    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }
    pub fn samples(&self) -> usize {
        self.p.nrows()
    }
    pub fn relative_degree(&self) -> usize {
        self.relative_degree
    }

    pub fn respond(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.samples() {
            return Err(Error::dim(format!(
                "input has {} samples, plant has {}",
                u.len(),
                self.samples()
            )));
        }
        Ok(&self.p * u + &self.d)
    }
}

/// Builds the lower-triangular Toeplitz plant matrix and the lifted free response.
pub fn build_lifted(ss: &StateSpace, n: usize) -> Result<LiftedPlant> {
    ss.check_trial(n)?;
    let h = ss.markov_parameters(n);
    let p = DMatrix::from_fn(n, n, |i, j| if i >= j { h[i - j] } else { 0.0 });
    let d = ss.simulate(&DVector::zeros(n))?;
    LiftedPlant::new(p, d, ss.relative_degree())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, c: f64) -> StateSpace {
        StateSpace::new(
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            DVector::from_element(1, c),
            1,
        )
        .unwrap()
    }

    #[test]
    fn memoryless_chain_gives_scaled_identity() {
        let lp = build_lifted(&scalar(0.0, 2.0, -1.5), 3).unwrap();
        assert_eq!(lp.p(), &(DMatrix::identity(3, 3) * -3.0));
        assert_eq!(lp.d(), &DVector::zeros(3));
    }

    #[test]
    fn first_order_toeplitz() {
        let lp = build_lifted(&scalar(0.5, 1.0, 1.0), 3).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.25, 0.5, 1.0]);
        assert!((lp.p() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn impulse_response_by_hand() {
        let ss = scalar(0.5, 1.0, 1.0);
        let u = Trajectory::new(DVector::from_vec(vec![1.0, 0.0, 0.0]), SignalKind::Input);
        let y = simulate_trial(&ss, &u, 3).unwrap();
        assert_eq!(y.kind, SignalKind::Output);
        assert_eq!(y.values.as_slice(), &[1.0, 0.5, 0.25]);
    }

    #[test]
    fn zero_input_zero_state_is_zero() {
        let ss = scalar(0.9, 1.0, 1.0);
        assert_eq!(ss.simulate(&DVector::zeros(5)).unwrap(), DVector::zeros(5));
    }

    #[test]
    fn relative_degree_two_shifts_output() {
        // double integrator-like chain: CB = 0, CAB = 1
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        let c = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(
            StateSpace::new(a.clone(), b.clone(), c.clone(), 1),
            Err(Error::RelativeDegreeMismatch { .. })
        ));
        let ss = StateSpace::new(a, b, c, 2).unwrap();
        let lp = build_lifted(&ss, 4).unwrap();
        assert_eq!(lp.p(), &DMatrix::identity(4, 4));
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ss.simulate(&u).unwrap(), u);
    }

    #[test]
    fn vanishing_markov_parameter_rejected() {
        let err = StateSpace::new(
            DMatrix::from_element(1, 1, 0.5),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 0.0),
            1,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::RelativeDegreeMismatch { index: 0, .. }
        ));
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(
            StateSpace::new(
                DMatrix::zeros(2, 2),
                DVector::from_element(1, 1.0),
                DVector::from_element(2, 1.0),
                1
            ),
            Err(Error::Dimension(_))
        ));
        let ss = scalar(0.5, 1.0, 1.0)
            .with_disturbance(vec![1.0, 2.0], None)
            .unwrap();
        assert!(matches!(build_lifted(&ss, 3), Err(Error::Dimension(_))));
        let u = Trajectory::new(DVector::zeros(2), SignalKind::Input);
        assert!(simulate_trial(&ss, &u, 3).is_err());
        let y = Trajectory::new(DVector::zeros(2), SignalKind::Output);
        assert!(simulate_trial(&ss, &y, 2).is_err());
    }

    #[test]
    fn superposition_with_disturbance() {
        let ss = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.7]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.5]),
            1,
        )
        .unwrap()
        .with_initial_state(DVector::from_vec(vec![0.3, -0.1]))
        .unwrap()
        .with_disturbance((0..6).map(|i| (i as f64).sin()).collect(), None)
        .unwrap();
        let lp = build_lifted(&ss, 6).unwrap();
        let u = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0]);
        let y = ss.simulate(&u).unwrap();
        let y0 = ss.simulate(&DVector::zeros(6)).unwrap();
        assert!((&y - &y0 - lp.p() * &u).abs().max() < 1e-12);
        assert!((y - lp.respond(&u).unwrap()).abs().max() < 1e-12);
    }
}
