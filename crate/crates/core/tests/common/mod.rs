#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use railc_core::design::{quadratic_optimal, IlcDesign, QuadOptWeights};
use railc_core::lifted::{build_lifted, LiftedPlant, StateSpace};
use rand::Rng;

/// Monic polynomial with the given real roots, lowest power first.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &z in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= z * ci;
        }
        c = next;
    }
    c
}

/// Stable minimum-phase plant of order `k` and relative degree `m`,
/// controllable canonical form.
pub fn random_state_space(rng: &mut impl Rng, k: usize, m: usize) -> StateSpace {
    let poles: Vec<f64> = (0..k).map(|_| rng.random_range(-0.9..0.9)).collect();
    let zeros: Vec<f64> = (0..k - m).map(|_| rng.random_range(-0.5..0.5)).collect();
    let den = poly_from_roots(&poles);
    let num = poly_from_roots(&zeros);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let gain = sign * rng.random_range(0.5..2.0);
    let a = DMatrix::from_fn(k, k, |i, j| {
        if i + 1 == k {
            -den[j]
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let c = DVector::from_fn(k, |i, _| num.get(i).map_or(0.0, |v| gain * v));
    StateSpace::new(a, b, c, m).unwrap()
}

/// Random plant with nonzero initial state and disturbance, plus its lifting.
pub fn random_plant(rng: &mut impl Rng, n: usize) -> (StateSpace, LiftedPlant) {
    let k = rng.random_range(1..=4);
    let m = rng.random_range(1..=k);
    let x0 = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
    let d: Vec<f64> = (0..n + m - 1)
        .map(|_| rng.random_range(-0.2..0.2))
        .collect();
    let ss = random_state_space(rng, k, m)
        .with_initial_state(x0)
        .unwrap()
        .with_disturbance(d, None)
        .unwrap();
    let lifted = build_lifted(&ss, n).unwrap();
    (ss, lifted)
}

/// Quadratic-optimal design with random weights and ρ(Q(I−LP)) < 0.95.
pub fn random_stable_design(rng: &mut impl Rng, p: &DMatrix<f64>) -> Option<IlcDesign> {
    for _ in 0..20 {
        let w = QuadOptWeights::new(
            1.0,
            10f64.powf(rng.random_range(-5.0..-1.0)),
            10f64.powf(rng.random_range(-4.0..0.0)),
        )
        .unwrap();
        if let Ok(design) = quadratic_optimal(p, w) {
            if design.report.rho < 0.95 {
                return Some(design);
            }
        }
    }
    None
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}
