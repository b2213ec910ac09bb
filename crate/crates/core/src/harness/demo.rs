//! Built-in scenario: a linearised inverted pendulum held upright by state
//! feedback, learning a pitch trajectory under an output bound.

use nalgebra::{DMatrix, DVector};

use super::config::{
    DesignSpec, DisturbanceSpec, EpsBarSpec, ExperimentConfig, Mode, PlantSpec, ReferenceSpec,
};
use crate::lifted::StateSpace;

pub const SAMPLE_TIME: f64 = 0.02;
pub const SAMPLES: usize = 150;
pub const TRIALS: usize = 15;
pub const Y_MAX: f64 = 1.31;
pub const REFERENCE_AMPLITUDE: f64 = 1.22;
pub const REFERENCE_FREQUENCY: f64 = 2.0 / 3.0 * std::f64::consts::PI;

/// Open-loop instability ω (rad/s) of θ̈ = ω²θ + β·u.
pub const PENDULUM_OMEGA: f64 = 8.0;
pub const INPUT_GAIN: f64 = 700.0;

/// Discrete feedback gain placing the closed-loop poles at exp((−6 ± 4j)·T).
pub const FEEDBACK_GAIN: [f64; 2] = [0.15721757216142485, 0.01674486337110486];

pub const WEIGHTS: (f64, f64, f64) = (1.0, 1e-4, 1e-3);
pub const EPS_BAR_SAFETY: f64 = 20.0;

/// Repeating torque burst around sample 112, near the negative peak of r:
/// a ground irregularity the robot hits on every trial.
pub const DISTURBANCE: DisturbanceSpec = DisturbanceSpec::Burst {
    amplitude: 8.0,
    period: 2.8,
    phase: 0.3,
    center: 112.0,
    width: 15.0,
};

/// Exact zero-order-hold discretisation of the open-loop pendulum (A_d, B_d).
pub fn open_loop() -> (DMatrix<f64>, DVector<f64>) {
    let w = PENDULUM_OMEGA;
    let (ch, sh) = ((w * SAMPLE_TIME).cosh(), (w * SAMPLE_TIME).sinh());
    let a = DMatrix::from_row_slice(2, 2, &[ch, sh / w, w * sh, ch]);
    let b = DVector::from_column_slice(&[(ch - 1.0) / (w * w), sh / w]) * INPUT_GAIN;
    (a, b)
}

/// Closed loop from the learning torque to the pitch angle, with the burst
/// disturbance entering alongside the input.
pub fn make_demo_plant() -> StateSpace {
    let (a, b) = open_loop();
    let k = DVector::from_column_slice(&FEEDBACK_GAIN);
    let a_cl = &a - &b * k.transpose();
    let c = DVector::from_column_slice(&[1.0, 0.0]);
    StateSpace::new(a_cl, b, c, 1)
        .and_then(|ss| ss.with_disturbance(DISTURBANCE.sequence(SAMPLES), None))
        .expect("demo plant constants are consistent")
}

pub fn demo_config() -> ExperimentConfig {
    let ss = make_demo_plant();
    let a = ss.a();
    let (s_e, s_u, s_du) = WEIGHTS;
    ExperimentConfig {
        samples: SAMPLES,
        y_max: Y_MAX,
        trials: TRIALS,
        mode: Mode::Compare,
        seed: 0,
        output: "railc-demo".into(),
        u0: None,
        bisect_tol: None,
        max_bisect_iters: None,
        plant: PlantSpec::StateSpace {
            a: (0..a.nrows())
                .map(|i| a.row(i).iter().copied().collect())
                .collect(),
            b: ss.b().iter().copied().collect(),
            c: ss.c().iter().copied().collect(),
            relative_degree: ss.relative_degree(),
            x0: None,
            disturbance_map: None,
            simulate: true,
            disturbance: Some(DISTURBANCE),
        },
        design: DesignSpec::QuadraticOptimal { s_e, s_u, s_du },
        reference: ReferenceSpec::Sine {
            amplitude: REFERENCE_AMPLITUDE,
            frequency: REFERENCE_FREQUENCY,
            sample_time: SAMPLE_TIME,
            start: None,
        },
        eps_bar: EpsBarSpec::Safety {
            factor: EPS_BAR_SAFETY,
        },
    }
}
