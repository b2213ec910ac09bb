//! Reference-adapting ILC: before each update the reference is pulled towards
//! the last output, `r_j = y_j + a_j (r − y_j)`, with `a_j` the largest value
//! for which the next output provably stays below `y_max`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::high_pass;
use crate::design::IlcDesign;
use crate::engine::{check_len, PlantModel, TrialRecord};
use crate::error::{Error, Result};
use crate::lifted::LiftedPlant;
use crate::linalg::inf_norm;

/// Tolerance applied to the "≤ y_max" assumption checks.
pub const ASSUMPTION_SLACK: f64 = 1e-9;

/// Below this ‖r − y_j‖∞ every scale gives the same adapted reference.
pub const DEGENERATE_GAP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RailcConfig {
    pub y_max: f64,
    pub eps_bar: f64,
    pub gamma_inf: f64,
    pub bisect_tol: f64,
    pub max_bisect_iters: usize,
    pub trials: usize,
    pub u0: Vec<f64>,
}

impl RailcConfig {
    pub fn new(y_max: f64, eps_bar: f64, gamma_inf: f64, trials: usize, u0: Vec<f64>) -> Self {
        RailcConfig {
            y_max,
            eps_bar,
            gamma_inf,
            bisect_tol: 1e-9,
            max_bisect_iters: 100,
            trials,
            u0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::Parse {
            line: None,
            message: format!("{what} has invalid value {v}"),
        };
        if !(self.y_max > 0.0 && self.y_max.is_finite()) {
            return Err(bad("y_max", self.y_max));
        }
        if !(self.eps_bar >= 0.0 && self.eps_bar.is_finite()) {
            return Err(bad("eps_bar", self.eps_bar));
        }
        if !(self.gamma_inf >= 0.0 && self.gamma_inf.is_finite()) {
            return Err(bad("gamma_inf", self.gamma_inf));
        }
        if !(self.bisect_tol > 0.0) {
            return Err(bad("bisect_tol", self.bisect_tol));
        }
        if self.max_bisect_iters == 0 {
            return Err(bad("max_bisect_iters", 0.0));
        }
        Ok(())
    }

    pub fn u0_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u0)
    }
}

/// Assumption 2: the reference itself respects the bound.
pub fn check_reference(r: &DVector<f64>, y_max: f64) -> Result<()> {
    let measured = inf_norm(r);
    if measured > y_max + ASSUMPTION_SLACK {
        return Err(Error::AssumptionViolated {
            assumption: 2,
            measured,
            bound: y_max,
        });
    }
    Ok(())
}

/// Assumption 1: the output of the initial input respects the bound.
pub fn check_initial_output(y0: &DVector<f64>, y_max: f64) -> Result<()> {
    let measured = inf_norm(y0);
    if measured > y_max + ASSUMPTION_SLACK {
        return Err(Error::AssumptionViolated {
            assumption: 1,
            measured,
            bound: y_max,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationResult {
    pub a: f64,
    pub r_adapted: DVector<f64>,
    /// y_max − ‖r_j‖∞ − ε̄ − a·γ∞·‖r − y_j‖∞
    pub slack: f64,
    pub feasible: bool,
}

/// safety · ‖(I − PQP⁻¹) r‖∞
pub fn estimate_eps_bar(
    p: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DVector<f64>,
    safety: f64,
) -> Result<f64> {
    check_len("r", r, p.nrows())?;
    Ok(safety * inf_norm(&high_pass(p, q, r)?))
}

/// g(a) = γ∞‖r − y_j‖∞·a + ‖y_j + a(r − y_j)‖∞ + ε̄ − y_max; feasible where g ≤ 0.
pub fn scale_residual(y_j: &DVector<f64>, r: &DVector<f64>, cfg: &RailcConfig, a: f64) -> f64 {
    let gap = r - y_j;
    residual(y_j, &gap, inf_norm(&gap), cfg, a)
}

fn residual(
    y_j: &DVector<f64>,
    gap: &DVector<f64>,
    gap_norm: f64,
    cfg: &RailcConfig,
    a: f64,
) -> f64 {
    cfg.gamma_inf * gap_norm * a + inf_norm(&(y_j + gap * a)) + cfg.eps_bar - cfg.y_max
}

/// Like [`solve_scale`], but an infeasible trial is reported in the result
/// (a = 0, r_adapted = y_j, negative slack) instead of as an error.
pub fn adapt(y_j: &DVector<f64>, r: &DVector<f64>, cfg: &RailcConfig) -> Result<AdaptationResult> {
    check_len("r", r, y_j.len())?;
    let gap = r - y_j;
    let gap_norm = inf_norm(&gap);
    let g = |a: f64| residual(y_j, &gap, gap_norm, cfg, a);

    let g0 = g(0.0);
    if g0 > 0.0 {
        return Ok(AdaptationResult {
            a: 0.0,
            r_adapted: y_j.clone(),
            slack: -g0,
            feasible: false,
        });
    }
    if gap_norm <= DEGENERATE_GAP {
        return Ok(AdaptationResult {
            a: 1.0,
            r_adapted: r.clone(),
            slack: -g(1.0),
            feasible: true,
        });
    }
    let g1 = g(1.0);
    if g1 <= 0.0 {
        return Ok(AdaptationResult {
            a: 1.0,
            r_adapted: r.clone(),
            slack: -g1,
            feasible: true,
        });
    }
    // g is convex with g(0) ≤ 0 < g(1): the feasible set in [0, 1] is [0, a*].
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut g_lo = g0;
    let mut iterations = 0;
    while hi - lo > cfg.bisect_tol {
        if iterations == cfg.max_bisect_iters {
            return Err(Error::IterationBudgetExceeded { iterations });
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let g_mid = g(mid);
        if g_mid <= 0.0 {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
    }
    Ok(AdaptationResult {
        a: lo,
        r_adapted: y_j + &gap * lo,
        slack: -g_lo,
        feasible: true,
    })
}

/// Largest a ∈ [0, 1] (to within `bisect_tol`) keeping g(a) ≤ 0.
pub fn solve_scale(
    y_j: &DVector<f64>,
    r: &DVector<f64>,
    cfg: &RailcConfig,
) -> Result<AdaptationResult> {
    let res = adapt(y_j, r, cfg)?;
    if !res.feasible {
        return Err(Error::Infeasible {
            trial: None,
            deficit: -res.slack,
        });
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RailcStep {
    pub u_next: DVector<f64>,
    pub adaptation: AdaptationResult,
}

/// u_{j+1} = Q(u_j + L(r_j − y_j)) with r_j from [`solve_scale`].
pub fn railc_step(
    design: &IlcDesign,
    u_j: &DVector<f64>,
    y_j: &DVector<f64>,
    r: &DVector<f64>,
    cfg: &RailcConfig,
) -> Result<RailcStep> {
    let n = design.samples();
    check_len("u_j", u_j, n)?;
    check_len("y_j", y_j, n)?;
    check_len("r", r, n)?;
    let adaptation = solve_scale(y_j, r, cfg)?;
    let u_next = &design.q * (u_j + &design.l * (&adaptation.r_adapted - y_j));
    Ok(RailcStep { u_next, adaptation })
}

/// The same update written against the lifted model:
/// u_{j+1} = Q(I − a·L·P)u_j + a·Q·L(r − d).
pub fn railc_step_lifted(
    design: &IlcDesign,
    plant: &LiftedPlant,
    u_j: &DVector<f64>,
    r: &DVector<f64>,
    a: f64,
) -> Result<DVector<f64>> {
    let n = design.samples();
    check_len("u_j", u_j, n)?;
    check_len("r", r, n)?;
    let lpu = &design.l * (plant.p() * u_j);
    let forcing = &design.l * (r - plant.d());
    Ok(&design.q * (u_j - lpu * a + forcing * a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halt {
    pub trial: usize,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RailcRun {
    pub records: Vec<TrialRecord>,
    pub halt: Option<Halt>,
}

impl RailcRun {
    pub fn a_progression(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.a).collect()
    }
}

/// Runs trial 0 from `cfg.u0` and then `cfg.trials` adapted updates. An infeasible
/// adaptation ends the run with a record carrying a = 0 and a [`Halt`].
pub fn run_railc(
    plant: &PlantModel,
    design: &IlcDesign,
    r: &DVector<f64>,
    cfg: &RailcConfig,
) -> Result<RailcRun> {
    cfg.validate()?;
    let n = plant.samples();
    if design.samples() != n {
        return Err(Error::dim(format!(
            "design is for {} samples, plant has {n}",
            design.samples()
        )));
    }
    check_len("r", r, n)?;
    let mut u = cfg.u0_vec();
    check_len("u0", &u, n)?;
    check_reference(r, cfg.y_max)?;

    let model = plant.model();
    let mut records = Vec::with_capacity(cfg.trials + 1);
    for j in 0..=cfg.trials {
        let y = plant.respond(&u)?;
        if j == 0 {
            check_initial_output(&y, cfg.y_max)?;
        }
        let adaptation = adapt(&y, r, cfg)?;
        let mut record =
            TrialRecord::new(j, &u, &y, r, &adaptation.r_adapted, adaptation.a, cfg.y_max);
        record.slack = Some(adaptation.slack);
        if !adaptation.feasible {
            let deficit = -adaptation.slack;
            log::error!("trial {j}: adaptation infeasible, deficit {deficit:e}");
            records.push(record);
            return Ok(RailcRun {
                records,
                halt: Some(Halt { trial: j, deficit }),
            });
        }
        let eps_true = inf_norm(&high_pass(
            model.p(),
            &design.q,
            &(&adaptation.r_adapted - model.d()),
        )?);
        if eps_true > cfg.eps_bar {
            log::warn!(
                "trial {j}: ‖(I − PQP⁻¹)(r_j − d)‖∞ = {eps_true:e} exceeds eps_bar = {:e}",
                cfg.eps_bar
            );
        }
        record.eps_true = Some(eps_true);
        if j < cfg.trials {
            u = &design.q * (&u + &design.l * (&adaptation.r_adapted - &y));
        }
        records.push(record);
    }
    Ok(RailcRun {
        records,
        halt: None,
    })
}
