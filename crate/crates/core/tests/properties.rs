mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use railc_core::analysis::gamma_hat;
use railc_core::engine::TrialRecord;
use railc_core::lifted::{simulate_trial, SignalKind, Trajectory};
use railc_core::linalg::NormKind;
use railc_core::railc::{solve_scale, RailcConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn g(y: &DVector<f64>, r: &DVector<f64>, cfg: &RailcConfig, a: f64) -> f64 {
    let gap = r - y;
    let gap_inf = gap.amax();
    let next = y + gap * a;
    cfg.gamma_inf * gap_inf * a + next.amax() + cfg.eps_bar - cfg.y_max
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lifted_matrix_is_lower_triangular_toeplitz(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ss, plant) = common::random_plant(&mut rng, n);
        let p = plant.p();
        let h = ss.markov_parameters(n);
        for i in 0..n {
            for j in 0..n {
                let expected = if i >= j { h[i - j] } else { 0.0 };
                prop_assert_eq!(p[(i, j)], expected);
            }
        }
        let mut w = ss.b().clone();
        for _ in 1..ss.relative_degree() {
            w = ss.a() * w;
        }
        prop_assert!((p[(0, 0)] - ss.c().dot(&w)).abs() <= 1e-12 * p[(0, 0)].abs().max(1.0));
    }

    #[test]
    fn simulation_matches_lifted_model(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ss, plant) = common::random_plant(&mut rng, n);
        let u = common::random_vector(&mut rng, n, 2.0);
        let y = simulate_trial(&ss, &Trajectory::new(u.clone(), SignalKind::Input), n).unwrap();
        let lifted = plant.p() * &u + plant.d();
        prop_assert!((&y.values - lifted).amax() <= 1e-9 * (1.0 + y.values.amax()));
    }

    #[test]
    fn scale_is_feasible_and_maximal(
        y in prop::collection::vec(-0.8f64..0.8, 1..20),
        r_unit in prop::collection::vec(-1.0f64..1.0, 20),
        gamma_inf in 0.0f64..1.5,
        eps_bar in 0.0f64..0.15,
    ) {
        let n = y.len();
        let y = DVector::from_vec(y);
        let r = DVector::from_iterator(n, r_unit.iter().take(n).map(|v| v * 0.99));
        let cfg = RailcConfig::new(1.0, eps_bar, gamma_inf, 1, vec![0.0; n]);
        prop_assume!(g(&y, &r, &cfg, 0.0) <= 0.0);
        let res = solve_scale(&y, &r, &cfg).unwrap();
        prop_assert!((0.0..=1.0).contains(&res.a));
        prop_assert!(g(&y, &r, &cfg, res.a) <= 1e-9);
        if res.a < 1.0 {
            let beyond = (res.a + 2.0 * cfg.bisect_tol).min(1.0);
            prop_assert!(g(&y, &r, &cfg, beyond) > 0.0);
        }
        let expected = &y + (&r - &y) * res.a;
        prop_assert!((res.r_adapted - expected).amax() <= 1e-12);
    }

    #[test]
    fn record_survives_json(values in prop::collection::vec(-1e6f64..1e6, 1..12), a in 0.0f64..=1.0) {
        let n = values.len();
        let u = DVector::from_vec(values.clone());
        let y = u.map(|v| v * 0.5 + 1e-7);
        let r = u.map(|v| -v);
        let mut record = TrialRecord::new(3, &u, &y, &r, &r, a, 1.0);
        record.slack = Some(values[0]);
        let text = serde_json::to_string(&record).unwrap();
        let back: TrialRecord = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, record);
        prop_assert_eq!(n, values.len());
    }

    #[test]
    fn gamma_hat_grows_with_the_a_set(
        seed in any::<u64>(),
        first in prop::collection::vec(0.0f64..=1.0, 1..4),
        extra in prop::collection::vec(0.0f64..=1.0, 1..4),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, plant) = common::random_plant(&mut rng, 10);
        let Some(design) = common::random_stable_design(&mut rng, plant.p()) else {
            return Ok(());
        };
        let all: Vec<f64> = first.iter().chain(extra.iter()).copied().collect();
        for norm in [NormKind::Two, NormKind::Inf] {
            let sub = gamma_hat(plant.p(), &design.l, &design.q, &first, norm).unwrap();
            let sup = gamma_hat(plant.p(), &design.l, &design.q, &all, norm).unwrap();
            prop_assert!(sup >= sub - 1e-12 * sub.max(1.0));
        }
    }
}
