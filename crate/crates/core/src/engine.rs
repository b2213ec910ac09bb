//! Conventional trial loop `u_{j+1} = Q(u_j + L e_j)` and per-trial records.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::IlcDesign;
use crate::error::{Error, Result};
use crate::lifted::{build_lifted, LiftedPlant, StateSpace};
use crate::linalg::inf_norm;

/// Everything observed on one trial. Vectors are stored plainly so a record
/// serialises to one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub j: usize,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    /// Reference that drove the update after this trial (the adapted one under RAILC).
    pub r_effective: Vec<f64>,
    /// r − y against the original reference.
    pub e: Vec<f64>,
    pub a: f64,
    pub norm_e2: f64,
    pub norm_e_inf: f64,
    pub norm_y_inf: f64,
    pub constraint_violated: bool,
    /// Adaptation residual y_max − ‖r_j‖∞ − ε̄ − a·γ∞·‖r − y_j‖∞.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    /// ‖(I − PQP⁻¹)(r_j − d)‖∞ for this trial's adapted reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_true: Option<f64>,
}

impl TrialRecord {
    pub fn new(
        j: usize,
        u: &DVector<f64>,
        y: &DVector<f64>,
        r: &DVector<f64>,
        r_effective: &DVector<f64>,
        a: f64,
        y_max: f64,
    ) -> Self {
        let e = r - y;
        let norm_y_inf = inf_norm(y);
        TrialRecord {
            j,
            u: u.iter().copied().collect(),
            y: y.iter().copied().collect(),
            r_effective: r_effective.iter().copied().collect(),
            norm_e2: e.norm(),
            norm_e_inf: inf_norm(&e),
            e: e.iter().copied().collect(),
            a,
            norm_y_inf,
            constraint_violated: norm_y_inf >= y_max,
            slack: None,
            eps_true: None,
        }
    }

    pub fn u_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u)
    }

    pub fn y_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }

    pub fn e_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.e)
    }

    pub fn r_effective_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.r_effective)
    }
}

/// The system a campaign runs against: the lifted model, optionally with a
/// state-space stepper that produces the measured outputs instead.
#[derive(Debug, Clone)]
pub struct PlantModel {
    lifted: LiftedPlant,
    simulator: Option<StateSpace>,
}

impl PlantModel {
    pub fn lifted(lifted: LiftedPlant) -> Self {
        PlantModel {
            lifted,
            simulator: None,
        }
    }

    /// Lifts `ss` over `n` samples; outputs come from stepping `ss` when `simulate` is set.
    pub fn state_space(ss: StateSpace, n: usize, simulate: bool) -> Result<Self> {
        let lifted = build_lifted(&ss, n)?;
        Ok(PlantModel {
            lifted,
            simulator: simulate.then_some(ss),
        })
    }

    pub fn model(&self) -> &LiftedPlant {
        &self.lifted
    }

    pub fn simulator(&self) -> Option<&StateSpace> {
        self.simulator.as_ref()
    }

    pub fn samples(&self) -> usize {
        self.lifted.samples()
    }

    pub fn respond(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.simulator {
            Some(ss) => ss.simulate(u),
            None => self.lifted.respond(u),
        }
    }
}

pub(crate) fn check_len(name: &str, v: &DVector<f64>, n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::dim(format!(
            "{name} has {} samples, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

/// u_{j+1} = Q(u_j + L e_j)
pub fn conventional_step(
    design: &IlcDesign,
    u_j: &DVector<f64>,
    e_j: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = design.samples();
    check_len("u_j", u_j, n)?;
    check_len("e_j", e_j, n)?;
    Ok(&design.q * (u_j + &design.l * e_j))
}

/// Trial 0 is the response to `u0`; each of the following `trials` records comes
/// from one update. Returns `trials + 1` records.
pub fn run_conventional(
    plant: &PlantModel,
    design: &IlcDesign,
    r: &DVector<f64>,
    u0: &DVector<f64>,
    trials: usize,
    y_max: f64,
) -> Result<Vec<TrialRecord>> {
    let n = plant.samples();
    if design.samples() != n {
        return Err(Error::dim(format!(
            "design is for {} samples, plant has {n}",
            design.samples()
        )));
    }
    check_len("r", r, n)?;
    check_len("u0", u0, n)?;
    let mut records = Vec::with_capacity(trials + 1);
    let mut u = u0.clone();
    for j in 0..=trials {
        let y = plant.respond(&u)?;
        let record = TrialRecord::new(j, &u, &y, r, r, 1.0, y_max);
        if record.constraint_violated {
            log::info!(
                "conventional trial {j}: ‖y‖∞ = {} reaches y_max = {y_max}",
                record.norm_y_inf
            );
        }
        if j < trials {
            u = conventional_step(design, &u, &(r - &y))?;
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{quadratic_optimal, QuadOptWeights};
    use nalgebra::DMatrix;

    fn setup() -> (PlantModel, IlcDesign) {
        let h: Vec<f64> = (0..8).map(|k| 0.6_f64.powi(k)).collect();
        let p = DMatrix::from_fn(8, 8, |i, j| if i >= j { h[i - j] } else { 0.0 });
        let plant = PlantModel::lifted(LiftedPlant::new(p.clone(), DVector::zeros(8), 1).unwrap());
        let design = quadratic_optimal(&p, QuadOptWeights::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        (plant, design)
    }

    #[test]
    fn zero_reference_gives_zero_records() {
        let (plant, design) = setup();
        let recs = run_conventional(
            &plant,
            &design,
            &DVector::zeros(8),
            &DVector::zeros(8),
            4,
            1.0,
        )
        .unwrap();
        assert_eq!(recs.len(), 5);
        for r in recs {
            assert!(r.u.iter().chain(&r.y).chain(&r.e).all(|&v| v == 0.0));
            assert_eq!(r.a, 1.0);
            assert!(!r.constraint_violated);
        }
    }

    #[test]
    fn deadbeat_converges_in_one_trial() {
        let (plant, design) = setup();
        let r = DVector::from_fn(8, |i, _| (i as f64 * 0.4).sin());
        let recs = run_conventional(&plant, &design, &r, &DVector::zeros(8), 3, 10.0).unwrap();
        assert!(recs[0].norm_e2 > 0.1);
        assert!(recs[1].norm_e2 < 1e-12);
    }

    #[test]
    fn fixed_point_step_keeps_input() {
        let (_, design) = setup();
        let mut d = design;
        d.q = DMatrix::identity(8, 8);
        let u = DVector::from_element(8, 0.3);
        assert_eq!(conventional_step(&d, &u, &DVector::zeros(8)).unwrap(), u);
        assert!(conventional_step(&d, &u, &DVector::zeros(7)).is_err());
    }

    #[test]
    fn zero_trials_gives_only_initial_record() {
        let (plant, design) = setup();
        let recs = run_conventional(
            &plant,
            &design,
            &DVector::zeros(8),
            &DVector::zeros(8),
            0,
            1.0,
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn violation_flag_is_inclusive() {
        let y = DVector::from_vec(vec![0.0, -1.0]);
        let r = DVector::zeros(2);
        assert!(TrialRecord::new(0, &r, &y, &r, &r, 1.0, 1.0).constraint_violated);
        assert!(!TrialRecord::new(0, &r, &y, &r, &r, 1.0, 1.0 + 1e-12).constraint_violated);
    }
}
