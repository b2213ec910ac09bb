mod common;

use nalgebra::{DMatrix, DVector};
use railc_core::analysis::{high_pass, TransitionParts};
use railc_core::harness::demo_config;
use railc_core::railc::{railc_step, railc_step_lifted, RailcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn step_forms_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 20 {
        let n = rng.random_range(3..25);
        let (_, plant) = common::random_plant(&mut rng, n);
        let Some(design) = common::random_stable_design(&mut rng, plant.p()) else {
            continue;
        };
        let u = common::random_vector(&mut rng, n, 0.5);
        let y = plant.p() * &u + plant.d();
        let y_max = 2.0 * (y.amax().max(1.0));
        let r = common::random_vector(&mut rng, n, 0.9 * y_max);
        let cfg = RailcConfig::new(y_max, 0.01, design.report.gamma_inf, 1, vec![0.0; n]);
        let step = railc_step(&design, &u, &y, &r, &cfg).unwrap();
        let lifted = railc_step_lifted(&design, &plant, &u, &r, step.adaptation.a).unwrap();
        let scale = 1.0 + step.u_next.amax();
        assert!((step.u_next - lifted).amax() <= 1e-9 * scale);
        checked += 1;
    }
}

#[test]
fn demo_error_follows_adapted_recursion() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = demo_config();
    cfg.output = dir.path().to_string_lossy().into_owned();
    let exp = cfg.prepare().unwrap();
    let out = railc_core::harness::run_experiment(&exp).unwrap();
    let railc = out.railc.unwrap();
    let model = exp.plant.model();
    let parts = TransitionParts::new(model.p(), &exp.design.l, &exp.design.q).unwrap();
    let forcing = high_pass(model.p(), &exp.design.q, &(&exp.reference - model.d())).unwrap();
    for w in railc.per_trial.windows(2) {
        let predicted: DVector<f64> = parts.at(w[0].a) * w[0].e_vec() + &forcing;
        let scale = 1.0 + w[1].norm_e_inf;
        assert!(
            (predicted - w[1].e_vec()).amax() <= 1e-9 * scale,
            "trial {}",
            w[1].j
        );
    }
}

#[test]
fn transition_parts_are_affine_in_a() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (_, plant) = common::random_plant(&mut rng, 12);
    let design = common::random_stable_design(&mut rng, plant.p()).unwrap();
    let parts = TransitionParts::new(plant.p(), &design.l, &design.q).unwrap();
    let p_inv = plant.p().clone().try_inverse().unwrap();
    for a in [0.0, 0.3, 1.0] {
        let direct: DMatrix<f64> = plant.p()
            * &design.q
            * (DMatrix::identity(12, 12) - &design.l * plant.p() * a)
            * &p_inv;
        assert!((parts.at(a) - direct).amax() <= 1e-8);
    }
}
