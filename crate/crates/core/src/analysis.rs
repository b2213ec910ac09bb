//! Stability and convergence certificates for a lifted ILC loop `(P, L, Q)`.
//!
//! All operators that would need `P⁻¹` go through [`RegularSolver`] so the
//! inverse is never formed explicitly.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, NormKind, RegularSolver};

/// Slack applied to the `‖PQP⁻¹‖₂ ≤ 1` test.
pub const PQP_SLACK: f64 = 1e-9;

fn check_square(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::dim(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn check_loop(p: &DMatrix<f64>, l: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<usize> {
    let n = p.nrows();
    check_square("P", p, n)?;
    check_square("L", l, n)?;
    check_square("Q", q, n)?;
    Ok(n)
}

fn check_vec(name: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(format!(
            "{name} has {} entries, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

/// The two pieces of the adapted error transition:
/// `P·Q·(I − a·L·P)·P⁻¹ = B − a·A` with `B = P·Q·P⁻¹` and `A = P·Q·L`.
#[derive(Debug, Clone)]
pub struct TransitionParts {
    pub pqp_inv: DMatrix<f64>,
    pub pql: DMatrix<f64>,
}

impl TransitionParts {
    pub fn new(p: &DMatrix<f64>, l: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Self> {
        check_loop(p, l, q)?;
        let solver = RegularSolver::new(p)?;
        let pq = p * q;
        Ok(TransitionParts {
            pqp_inv: solver.solve_right(&pq),
            pql: &pq * l,
        })
    }

    pub fn at(&self, a: f64) -> DMatrix<f64> {
        &self.pqp_inv - &self.pql * a
    }
}

/// M = P·Q·(I − L·P)·P⁻¹, the trial-to-trial error transition.
pub fn transition_matrix(
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = check_loop(p, l, q)?;
    let solver = RegularSolver::new(p)?;
    let i_lp = DMatrix::identity(n, n) - l * p;
    Ok(solver.solve_right(&(p * q * i_lp)))
}

pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    linalg::spectral_radius(m)
}

/// Largest singular value of the transition matrix.
pub fn gamma_2(p: &DMatrix<f64>, l: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::spectral_norm(&transition_matrix(p, l, q)?))
}

/// Induced ∞-norm (max absolute row sum) of the transition matrix.
pub fn gamma_inf(p: &DMatrix<f64>, l: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::induced_inf_norm(&transition_matrix(p, l, q)?))
}

/// Spectral radius of Q·(I − L·P); the loop is asymptotically stable iff this is < 1.
pub fn stability_radius(p: &DMatrix<f64>, l: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    let n = check_loop(p, l, q)?;
    linalg::spectral_radius(&(q * (DMatrix::identity(n, n) - l * p)))
}

/// Limit error e∞ = [I − P·(I − Q(I−LP))⁻¹·Q·L]·(r − d).
pub fn residual_error(
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = check_loop(p, l, q)?;
    check_vec("r", r, n)?;
    check_vec("d", d, n)?;
    let iter = q * (DMatrix::identity(n, n) - l * p);
    let rho = linalg::spectral_radius(&iter)?;
    if rho >= 1.0 {
        return Err(Error::NotAsymptoticallyStable { rho });
    }
    let lu = (DMatrix::identity(n, n) - iter).lu();
    let forcing = r - d;
    let w = q * (l * &forcing);
    let z = lu.solve(&w).ok_or(Error::SingularSystem)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(forcing - p * z)
}

/// ‖(I − P·Q·P⁻¹)·(r − d)‖ in the chosen norm.
pub fn threshold_epsilon(
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DVector<f64>,
    d: &DVector<f64>,
    norm: NormKind,
) -> Result<f64> {
    let n = p.nrows();
    check_square("P", p, n)?;
    check_square("Q", q, n)?;
    check_vec("r", r, n)?;
    check_vec("d", d, n)?;
    Ok(norm.vector(&high_pass(p, q, &(r - d))?))
}

/// (I − P·Q·P⁻¹)·v
pub fn high_pass(p: &DMatrix<f64>, q: &DMatrix<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    let solver = RegularSolver::new(p)?;
    let w = solver.solve_vec(v);
    Ok(v - p * (q * w))
}

/// max over `a_values` of ‖P·Q·(I − a·L·P)·P⁻¹‖.
pub fn gamma_hat(
    p: &DMatrix<f64>,
    l: &DMatrix<f64>,
    q: &DMatrix<f64>,
    a_values: &[f64],
    norm: NormKind,
) -> Result<f64> {
    if a_values.is_empty() {
        return Err(Error::dim("gamma_hat needs at least one a value"));
    }
    let parts = TransitionParts::new(p, l, q)?;
    Ok(gamma_hat_from_parts(&parts, a_values, norm))
}

pub fn gamma_hat_from_parts(parts: &TransitionParts, a_values: &[f64], norm: NormKind) -> f64 {
    gamma_hat_seeded(parts, a_values, norm, linalg::DEFAULT_SEED)
}

fn gamma_hat_seeded(parts: &TransitionParts, a_values: &[f64], norm: NormKind, seed: u64) -> f64 {
    let mut distinct: Vec<f64> = a_values.to_vec();
    distinct.sort_by(|x, y| x.total_cmp(y));
    distinct.dedup();
    distinct
        .iter()
        .map(|&a| {
            let m = parts.at(a);
            match norm {
                NormKind::Two => linalg::spectral_norm_seeded(&m, seed),
                NormKind::Inf => linalg::induced_inf_norm(&m),
            }
        })
        .fold(0.0, f64::max)
}

/// Euclidean sufficient condition for threshold convergence under any a ∈ (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop7Check {
    pub gamma2: f64,
    pub pqpinv_norm2: f64,
    pub sufficient: bool,
}

pub fn check_prop7(p: &DMatrix<f64>, l: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Prop7Check> {
    let parts = TransitionParts::new(p, l, q)?;
    Ok(prop7_from_parts(&parts, linalg::DEFAULT_SEED))
}

fn prop7_from_parts(parts: &TransitionParts, seed: u64) -> Prop7Check {
    let gamma2 = linalg::spectral_norm_seeded(&parts.at(1.0), seed);
    let pqpinv_norm2 = linalg::spectral_norm_seeded(&parts.pqp_inv, seed);
    Prop7Check {
        gamma2,
        pqpinv_norm2,
        sufficient: gamma2 < 1.0 && pqpinv_norm2 <= 1.0 + PQP_SLACK,
    }
}

/// Evaluation of the matrix-norm implication
/// `‖B − A‖₂ < 1 ∧ ‖B‖₂ ≤ 1  ⟹  ‖B − a·A‖₂ < 1` for a ∈ (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppendixBound {
    pub premise_holds: bool,
    pub conclusion_holds: bool,
}

pub fn check_appendix_bound(a_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>, a: f64) -> AppendixBound {
    let premise_holds =
        linalg::spectral_norm(&(b_mat - a_mat)) < 1.0 && linalg::spectral_norm(b_mat) <= 1.0;
    let conclusion_holds = linalg::spectral_norm(&(b_mat - a_mat * a)) < 1.0;
    AppendixBound {
        premise_holds,
        conclusion_holds,
    }
}

/// vᵀ(BᵀA + AᵀB)v − (vᵀAᵀAv + vᵀBᵀBv − 1); positive whenever ‖B − A‖₂ < 1 and ‖v‖₂ = 1.
pub fn lemma_margin(a_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let av = a_mat * v;
    let bv = b_mat * v;
    2.0 * bv.dot(&av) - (av.norm_squared() + bv.norm_squared() - 1.0)
}

/// Certificates for one design, optionally tied to a reference/disturbance pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// ρ(Q(I − LP))
    pub rho: f64,
    pub gamma2: f64,
    pub gamma_inf: f64,
    /// ‖(I − PQP⁻¹)(r − d)‖₂, when a reference is attached.
    pub epsilon_hat: Option<f64>,
    /// max over the supplied a_j of ‖PQ(I − a_j LP)P⁻¹‖₂.
    pub gamma_hat2: f64,
    /// max(γ₂, ‖PQP⁻¹‖₂): bounds γ̂₂ for every a ∈ [0, 1] by convexity in a.
    pub gamma_hat2_bound: f64,
    /// ε̂ / (1 − γ̂₂), or +∞ when γ̂₂ ≥ 1.
    pub kappa_hat: Option<f64>,
    pub pqpinv_norm2: f64,
    pub asymptotically_stable: bool,
    pub monotonic2: bool,
    pub monotonic_inf: bool,
    pub prop7_sufficient: bool,
}

impl ConvergenceReport {
    /// Report for the unadapted loop (a = 1), without a reference.
    pub fn analyze(p: &DMatrix<f64>, l: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<Self> {
        Self::build(p, l, q, None, &[1.0], linalg::DEFAULT_SEED)
    }

    /// Report including ε̂ and κ̂ for the given reference and disturbance, with γ̂₂
    /// taken over `a_values` (use `&[1.0]` for conventional ILC).
    pub fn analyze_with_reference(
        p: &DMatrix<f64>,
        l: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DVector<f64>,
        d: &DVector<f64>,
        a_values: &[f64],
    ) -> Result<Self> {
        Self::build(p, l, q, Some((r, d)), a_values, linalg::DEFAULT_SEED)
    }

    /// General form; `seed` drives the random restarts of the 2-norm estimates.
    pub fn build(
        p: &DMatrix<f64>,
        l: &DMatrix<f64>,
        q: &DMatrix<f64>,
        reference: Option<(&DVector<f64>, &DVector<f64>)>,
        a_values: &[f64],
        seed: u64,
    ) -> Result<Self> {
        let n = check_loop(p, l, q)?;
        if a_values.is_empty() {
            return Err(Error::dim("a_values must not be empty"));
        }
        let parts = TransitionParts::new(p, l, q)?;
        let m = parts.at(1.0);
        let rho = linalg::spectral_radius(&(q * (DMatrix::identity(n, n) - l * p)))?;
        let prop7 = prop7_from_parts(&parts, seed);
        let gamma2 = prop7.gamma2;
        let gamma_inf = linalg::induced_inf_norm(&m);
        let gamma_hat2 = gamma_hat_seeded(&parts, a_values, NormKind::Two, seed);
        let epsilon_hat = match reference {
            Some((r, d)) => Some(threshold_epsilon(p, q, r, d, NormKind::Two)?),
            None => None,
        };
        let kappa_hat = epsilon_hat.map(|eps| kappa(eps, gamma_hat2));
        Ok(ConvergenceReport {
            rho,
            gamma2,
            gamma_inf,
            epsilon_hat,
            gamma_hat2,
            gamma_hat2_bound: gamma2.max(prop7.pqpinv_norm2),
            kappa_hat,
            pqpinv_norm2: prop7.pqpinv_norm2,
            asymptotically_stable: rho < 1.0,
            monotonic2: gamma2 < 1.0,
            monotonic_inf: gamma_inf < 1.0,
            prop7_sufficient: prop7.sufficient,
        })
    }

    /// One `key = value` per line.
    pub fn to_kv_text(&self) -> String {
        self.to_string()
    }
}

/// Threshold ε / (1 − γ); infinite when γ ≥ 1.
pub fn kappa(epsilon: f64, gamma: f64) -> f64 {
    if gamma < 1.0 {
        epsilon / (1.0 - gamma)
    } else {
        f64::INFINITY
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into())
}

impl fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "rho = {}", self.rho)?;
        writeln!(f, "gamma2 = {}", self.gamma2)?;
        writeln!(f, "gamma_inf = {}", self.gamma_inf)?;
        writeln!(f, "epsilon_hat = {}", opt(self.epsilon_hat))?;
        writeln!(f, "gamma_hat2 = {}", self.gamma_hat2)?;
        writeln!(f, "gamma_hat2_bound = {}", self.gamma_hat2_bound)?;
        writeln!(f, "kappa_hat = {}", opt(self.kappa_hat))?;
        writeln!(f, "pqpinv_norm2 = {}", self.pqpinv_norm2)?;
        writeln!(f, "asymptotically_stable = {}", self.asymptotically_stable)?;
        writeln!(f, "monotonic2 = {}", self.monotonic2)?;
        writeln!(f, "monotonic_inf = {}", self.monotonic_inf)?;
        writeln!(f, "prop7_sufficient = {}", self.prop7_sufficient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_lower(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed;
        DMatrix::from_fn(n, n, |i, j| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            let v = ((s >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
            match i.cmp(&j) {
                std::cmp::Ordering::Greater => v,
                std::cmp::Ordering::Equal => 1.0,
                std::cmp::Ordering::Less => 0.0,
            }
        })
    }

    fn inverse(p: &DMatrix<f64>) -> DMatrix<f64> {
        p.clone().try_inverse().unwrap()
    }

    #[test]
    fn deadbeat_and_frozen_transitions() {
        let p = unit_lower(4, 7);
        let i = DMatrix::identity(4, 4);
        let m = transition_matrix(&p, &inverse(&p), &i).unwrap();
        assert!(m.abs().max() < 1e-12);
        let m = transition_matrix(&p, &DMatrix::zeros(4, 4), &i).unwrap();
        assert!((m - &i).abs().max() < 1e-12);
    }

    #[test]
    fn half_learning_gain_halves_transition() {
        let p = unit_lower(4, 11);
        let i = DMatrix::identity(4, 4);
        let l = inverse(&p) * 0.5;
        let m = transition_matrix(&p, &l, &i).unwrap();
        // dense oracle with an explicit inverse
        let oracle = &p * &i * (&i - &l * &p) * inverse(&p);
        assert!((&m - &oracle).abs().max() < 1e-12);
        assert!((m - i * 0.5).abs().max() < 1e-12);
    }

    #[test]
    fn strictly_lower_two_by_two_norms() {
        // choose P = I, Q = I, L = I − M so that the transition equals M
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]);
        let i = DMatrix::identity(2, 2);
        let l = &i - &m;
        assert!((gamma_2(&i, &l, &i).unwrap() - 0.5).abs() < 1e-12);
        assert!((gamma_inf(&i, &l, &i).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn residual_error_vanishes_for_identity_filter_and_zero_forcing() {
        let p = unit_lower(5, 3);
        let i = DMatrix::identity(5, 5);
        let l = inverse(&p) * 0.7;
        let r = DVector::from_fn(5, |k, _| (k as f64).cos());
        let d = DVector::from_fn(5, |k, _| 0.1 * k as f64);
        let e = residual_error(&p, &l, &i, &r, &d).unwrap();
        assert!(e.amax() < 1e-12);
        let q = &i * 0.8;
        let e = residual_error(&p, &l, &q, &r, &r).unwrap();
        assert!(e.amax() < 1e-15);
    }

    #[test]
    fn residual_error_rejects_unstable_loop() {
        let p = DMatrix::identity(3, 3);
        let l = DMatrix::identity(3, 3) * -1.0;
        let q = DMatrix::identity(3, 3);
        let r = DVector::from_element(3, 1.0);
        assert!(matches!(
            residual_error(&p, &l, &q, &r, &DVector::zeros(3)),
            Err(Error::NotAsymptoticallyStable { .. })
        ));
    }

    #[test]
    fn threshold_epsilon_examples() {
        let p = DMatrix::identity(2, 2);
        let q = DMatrix::identity(2, 2) * 0.5;
        let r = DVector::from_element(2, 1.0);
        let d = DVector::zeros(2);
        let eps = threshold_epsilon(&p, &q, &r, &d, NormKind::Inf).unwrap();
        assert!((eps - 0.5).abs() < 1e-15);
        let eps2 = threshold_epsilon(&p, &q, &r, &d, NormKind::Two).unwrap();
        assert!((eps2 - 0.5_f64 * 2.0_f64.sqrt()).abs() < 1e-15);
        let i = DMatrix::identity(2, 2);
        assert_eq!(
            threshold_epsilon(&p, &i, &r, &d, NormKind::Inf).unwrap(),
            0.0
        );
        assert_eq!(
            threshold_epsilon(&p, &q, &r, &r, NormKind::Two).unwrap(),
            0.0
        );
    }

    #[test]
    fn gamma_hat_special_cases() {
        let p = unit_lower(4, 5);
        let i = DMatrix::identity(4, 4);
        let l = inverse(&p) * 0.6;
        let q = &i * 0.9;
        let g1 = gamma_hat(&p, &l, &q, &[1.0], NormKind::Two).unwrap();
        assert!((g1 - gamma_2(&p, &l, &q).unwrap()).abs() < 1e-12);
        let g1i = gamma_hat(&p, &l, &q, &[1.0], NormKind::Inf).unwrap();
        assert!((g1i - gamma_inf(&p, &l, &q).unwrap()).abs() < 1e-12);
        let g0 = gamma_hat(&p, &l, &i, &[0.0], NormKind::Two).unwrap();
        assert!((g0 - 1.0).abs() < 1e-12);
        assert!(gamma_hat(&p, &l, &q, &[], NormKind::Two).is_err());
    }

    #[test]
    fn prop7_examples() {
        let p = unit_lower(4, 9);
        let i = DMatrix::identity(4, 4);
        let l = inverse(&p) * 0.5;
        let c = check_prop7(&p, &l, &i).unwrap();
        assert!((c.pqpinv_norm2 - 1.0).abs() < 1e-12);
        assert!(c.sufficient);
        let c = check_prop7(&p, &l, &(&i * 2.0)).unwrap();
        assert!((c.pqpinv_norm2 - 2.0).abs() < 1e-12);
        assert!(!c.sufficient);
    }

    #[test]
    fn appendix_bound_examples() {
        let b = DMatrix::identity(3, 3) * 0.8;
        let r = check_appendix_bound(&b, &b, 0.25);
        assert!(r.premise_holds && r.conclusion_holds);
        let i = DMatrix::identity(3, 3);
        let r = check_appendix_bound(&i, &i, 1.0);
        assert!(r.premise_holds && r.conclusion_holds);
    }

    #[test]
    fn report_flags_match_values() {
        let p = unit_lower(5, 21);
        let i = DMatrix::identity(5, 5);
        let l = inverse(&p) * 0.5;
        let q = &i * 0.95;
        let rep = ConvergenceReport::analyze(&p, &l, &q).unwrap();
        assert!(rep.rho <= rep.gamma2.min(rep.gamma_inf) + 1e-8);
        assert_eq!(rep.asymptotically_stable, rep.rho < 1.0);
        assert_eq!(rep.monotonic2, rep.gamma2 < 1.0);
        assert_eq!(rep.monotonic_inf, rep.gamma_inf < 1.0);
        assert!(rep.epsilon_hat.is_none() && rep.kappa_hat.is_none());
        let text = rep.to_kv_text();
        assert!(text.contains("monotonic2 = true"));
        assert!(text.contains("kappa_hat = n/a"));
    }
}
