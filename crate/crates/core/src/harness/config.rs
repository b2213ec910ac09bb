use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{quadratic_optimal, IlcDesign, QuadOptWeights};
use crate::engine::PlantModel;
use crate::error::{Error, Result};
use crate::lifted::{LiftedPlant, StateSpace};
use crate::railc::{check_initial_output, check_reference, estimate_eps_bar, RailcConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Conventional,
    Railc,
    Compare,
}

/// One experiment as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Samples per trial (N).
    pub samples: usize,
    pub y_max: f64,
    pub trials: usize,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bisect_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bisect_iters: Option<usize>,
    pub plant: PlantSpec,
    pub design: DesignSpec,
    pub reference: ReferenceSpec,
    pub eps_bar: EpsBarSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantSpec {
    StateSpace {
        /// Row-major.
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        relative_degree: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x0: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        disturbance_map: Option<Vec<f64>>,
        /// Measure outputs by stepping the state equation instead of `P·u + d`.
        #[serde(default = "yes")]
        simulate: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        disturbance: Option<DisturbanceSpec>,
    },
    Lifted {
        /// Row-major N×N.
        p: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<Vec<f64>>,
        #[serde(default = "one")]
        relative_degree: usize,
    },
}

fn yes() -> bool {
    true
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    Explicit {
        values: Vec<f64>,
    },
    /// amplitude · sin(2πn/period + phase) · exp(−½((n − center)/width)²)
    Burst {
        amplitude: f64,
        period: f64,
        phase: f64,
        center: f64,
        width: f64,
    },
}

impl DisturbanceSpec {
    pub fn sequence(&self, len: usize) -> Vec<f64> {
        match self {
            DisturbanceSpec::Explicit { values } => values.clone(),
            DisturbanceSpec::Burst {
                amplitude,
                period,
                phase,
                center,
                width,
            } => (0..len)
                .map(|n| {
                    let n = n as f64;
                    let z = (n - center) / width;
                    amplitude
                        * (2.0 * std::f64::consts::PI * n / period + phase).sin()
                        * (-0.5 * z * z).exp()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DesignSpec {
    QuadraticOptimal { s_e: f64, s_u: f64, s_du: f64 },
    PdLearning { kp: f64, kd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    /// amplitude · sin(frequency · sample_time · n) for n = start..start+N−1;
    /// `start` defaults to the relative degree so r lines up with y(m)….
    Sine {
        amplitude: f64,
        frequency: f64,
        sample_time: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<usize>,
    },
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsBarSpec {
    Explicit {
        value: f64,
    },
    /// factor · ‖(I − PQP⁻¹) r‖∞
    Safety {
        factor: f64,
    },
}

fn invalid(message: impl Into<String>) -> Error {
    Error::Parse {
        line: None,
        message: message.into(),
    }
}

fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(invalid(format!("{name} has rows of unequal length")));
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

fn finite(values: &[f64], name: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(format!("{name} contains non-finite values")));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses TOML text; syntax and field errors carry the line number.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid(e.to_string()))
    }

    pub fn relative_degree(&self) -> usize {
        match &self.plant {
            PlantSpec::StateSpace {
                relative_degree, ..
            }
            | PlantSpec::Lifted {
                relative_degree, ..
            } => *relative_degree,
        }
    }

    /// Checks value ranges and that every vector agrees with `samples`.
    pub fn validate(&self) -> Result<()> {
        let n = self.samples;
        if n == 0 {
            return Err(invalid("samples must be at least 1"));
        }
        if !(self.y_max > 0.0 && self.y_max.is_finite()) {
            return Err(invalid(format!(
                "y_max must be positive, got {}",
                self.y_max
            )));
        }
        if let Some(u0) = &self.u0 {
            finite(u0, "u0")?;
            if u0.len() != n {
                return Err(Error::dim(format!(
                    "u0 has {} samples, expected {n}",
                    u0.len()
                )));
            }
        }
        if let Some(tol) = self.bisect_tol {
            if !(tol > 0.0) {
                return Err(invalid("bisect_tol must be positive"));
            }
        }
        if self.max_bisect_iters == Some(0) {
            return Err(invalid("max_bisect_iters must be positive"));
        }
        match &self.reference {
            ReferenceSpec::Explicit { values } => {
                finite(values, "reference")?;
                if values.len() != n {
                    return Err(Error::dim(format!(
                        "reference has {} samples, expected {n}",
                        values.len()
                    )));
                }
            }
            ReferenceSpec::Sine {
                amplitude,
                frequency,
                sample_time,
                ..
            } => finite(&[*amplitude, *frequency, *sample_time], "reference")?,
        }
        match self.eps_bar {
            EpsBarSpec::Explicit { value } if !(value >= 0.0 && value.is_finite()) => {
                return Err(invalid(format!("eps_bar must be nonnegative, got {value}")))
            }
            EpsBarSpec::Safety { factor } if !(factor > 0.0 && factor.is_finite()) => {
                return Err(invalid(format!(
                    "eps_bar factor must be positive, got {factor}"
                )))
            }
            _ => {}
        }
        if let DesignSpec::QuadraticOptimal { s_e, s_u, s_du } = self.design {
            QuadOptWeights::new(s_e, s_u, s_du)?;
        }
        match &self.plant {
            PlantSpec::Lifted { p, d, .. } => {
                if p.len() != n || p.iter().any(|row| row.len() != n) {
                    return Err(Error::dim(format!("P must be {n}x{n}")));
                }
                p.iter().try_for_each(|row| finite(row, "P"))?;
                if let Some(d) = d {
                    finite(d, "d")?;
                    if d.len() != n {
                        return Err(Error::dim(format!(
                            "d has {} samples, expected {n}",
                            d.len()
                        )));
                    }
                }
            }
            PlantSpec::StateSpace {
                a,
                b,
                c,
                x0,
                disturbance_map,
                disturbance,
                ..
            } => {
                a.iter().try_for_each(|row| finite(row, "A"))?;
                finite(b, "B")?;
                finite(c, "C")?;
                for (name, v) in [("x0", x0), ("disturbance_map", disturbance_map)] {
                    if let Some(v) = v {
                        finite(v, name)?;
                    }
                }
                if let Some(DisturbanceSpec::Explicit { values }) = disturbance {
                    finite(values, "disturbance")?;
                }
            }
        }
        Ok(())
    }

    pub fn plant_model(&self) -> Result<PlantModel> {
        let n = self.samples;
        match &self.plant {
            PlantSpec::StateSpace {
                a,
                b,
                c,
                relative_degree,
                x0,
                disturbance_map,
                simulate,
                disturbance,
            } => {
                let mut ss = StateSpace::new(
                    matrix(a, "A")?,
                    DVector::from_column_slice(b),
                    DVector::from_column_slice(c),
                    *relative_degree,
                )?;
                if let Some(x0) = x0 {
                    ss = ss.with_initial_state(DVector::from_column_slice(x0))?;
                }
                let steps = n + relative_degree - 1;
                let d = disturbance
                    .as_ref()
                    .map(|spec| spec.sequence(steps))
                    .unwrap_or_default();
                let map = disturbance_map.as_deref().map(DVector::from_column_slice);
                ss = ss.with_disturbance(d, map)?;
                PlantModel::state_space(ss, n, *simulate)
            }
            PlantSpec::Lifted {
                p,
                d,
                relative_degree,
            } => {
                let d = d
                    .as_deref()
                    .map(DVector::from_column_slice)
                    .unwrap_or_else(|| DVector::zeros(n));
                Ok(PlantModel::lifted(LiftedPlant::new(
                    matrix(p, "P")?,
                    d,
                    *relative_degree,
                )?))
            }
        }
    }

    pub fn reference_vector(&self) -> DVector<f64> {
        let n = self.samples;
        match &self.reference {
            ReferenceSpec::Explicit { values } => DVector::from_column_slice(values),
            ReferenceSpec::Sine {
                amplitude,
                frequency,
                sample_time,
                start,
            } => {
                let start = start.unwrap_or_else(|| self.relative_degree());
                DVector::from_fn(n, |i, _| {
                    amplitude * (frequency * sample_time * (start + i) as f64).sin()
                })
            }
        }
    }

    pub fn u0_vector(&self) -> DVector<f64> {
        match &self.u0 {
            Some(u0) => DVector::from_column_slice(u0),
            None => DVector::zeros(self.samples),
        }
    }

    pub fn design(&self, p: &DMatrix<f64>) -> Result<IlcDesign> {
        match self.design {
            DesignSpec::QuadraticOptimal { s_e, s_u, s_du } => {
                quadratic_optimal(p, QuadOptWeights::new(s_e, s_u, s_du)?)
            }
            DesignSpec::PdLearning { kp, kd } => IlcDesign::pd(p, kp, kd),
        }
    }

    /// Assumption 2 on the reference and Assumption 1 on the response to u0.
    pub fn check_assumptions(&self, plant: &PlantModel) -> Result<()> {
        check_reference(&self.reference_vector(), self.y_max)?;
        check_initial_output(&plant.respond(&self.u0_vector())?, self.y_max)
    }

    /// Builds the plant, design, reference and ε̄ without checking the assumptions.
    pub fn prepare(&self) -> Result<Experiment> {
        self.validate()?;
        let plant = self.plant_model()?;
        let design = self.design(plant.model().p())?;
        let reference = self.reference_vector();
        let eps_bar = match self.eps_bar {
            EpsBarSpec::Explicit { value } => value,
            EpsBarSpec::Safety { factor } => {
                estimate_eps_bar(plant.model().p(), &design.q, &reference, factor)?
            }
        };
        Ok(Experiment {
            u0: self.u0_vector(),
            config: self.clone(),
            plant,
            design,
            reference,
            eps_bar,
        })
    }
}

/// Parses and fully validates a config file, including both assumptions
/// (which simulates u0 once).
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let cfg = ExperimentConfig::from_toml(&text)?;
    cfg.validate()?;
    cfg.check_assumptions(&cfg.plant_model()?)?;
    Ok(cfg)
}

/// A config turned into the objects the engines run on.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub plant: PlantModel,
    pub design: IlcDesign,
    pub reference: DVector<f64>,
    pub u0: DVector<f64>,
    pub eps_bar: f64,
}

impl Experiment {
    pub fn railc_config(&self) -> RailcConfig {
        let mut cfg = RailcConfig::new(
            self.config.y_max,
            self.eps_bar,
            self.design.report.gamma_inf,
            self.config.trials,
            self.u0.iter().copied().collect(),
        );
        if let Some(tol) = self.config.bisect_tol {
            cfg.bisect_tol = tol;
        }
        if let Some(iters) = self.config.max_bisect_iters {
            cfg.max_bisect_iters = iters;
        }
        cfg
    }
}
