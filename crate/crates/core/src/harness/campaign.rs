use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Experiment, ExperimentConfig, Mode};
use crate::analysis::{check_prop7, ConvergenceReport};
use crate::design::IlcDesign;
use crate::engine::{run_conventional, PlantModel, TrialRecord};
use crate::error::Result;
use crate::railc::{run_railc, Halt, RailcConfig};

pub const TRIALS_HEADER: &str = "j,normE2,normEInf,normYInf,a";
pub const TRAJECTORIES_HEADER: &str = "j,n,u,y,r_effective";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Conventional,
    Railc,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Conventional => "conventional",
            Engine::Railc => "railc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HaltReason {
    Completed,
    Infeasible { trial: usize, deficit: f64 },
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RecordLine {
    Trial(TrialRecord),
    Halt(Halt),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub engine: Engine,
    pub per_trial: Vec<TrialRecord>,
    pub convergence: ConvergenceReport,
    pub kappa_hat: f64,
    pub violations: usize,
    pub a_progression: Vec<f64>,
    pub halt_reason: HaltReason,
    /// SHA-256 over P, d, L, Q, u0 and r as handed to the engine.
    pub input_hash: String,
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub out_dir: PathBuf,
    pub eps_bar: f64,
    pub conventional: Option<CampaignSummary>,
    pub railc: Option<CampaignSummary>,
}

impl CampaignOutput {
    pub fn summaries(&self) -> impl Iterator<Item = &CampaignSummary> {
        self.conventional.iter().chain(self.railc.iter())
    }

    pub fn halted(&self) -> Option<(usize, f64)> {
        self.summaries().find_map(|s| match s.halt_reason {
            HaltReason::Infeasible { trial, deficit } => Some((trial, deficit)),
            HaltReason::Completed => None,
        })
    }
}

pub fn input_hash(
    p: &DMatrix<f64>,
    d: &DVector<f64>,
    l: &DMatrix<f64>,
    q: &DMatrix<f64>,
    u0: &DVector<f64>,
    r: &DVector<f64>,
) -> String {
    let mut hasher = Sha256::new();
    for block in [
        p.as_slice(),
        d.as_slice(),
        l.as_slice(),
        q.as_slice(),
        u0.as_slice(),
        r.as_slice(),
    ] {
        hasher.update((block.len() as u64).to_le_bytes());
        for v in block {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

struct Inputs<'a> {
    plant: &'a PlantModel,
    design: &'a IlcDesign,
    reference: &'a DVector<f64>,
    u0: &'a DVector<f64>,
    y_max: f64,
    trials: usize,
    seed: u64,
}

impl Inputs<'_> {
    fn hash(&self) -> String {
        let m = self.plant.model();
        input_hash(
            m.p(),
            m.d(),
            &self.design.l,
            &self.design.q,
            self.u0,
            self.reference,
        )
    }

    fn summarize(
        &self,
        engine: Engine,
        records: Vec<TrialRecord>,
        update_scales: &[f64],
        halt_reason: HaltReason,
    ) -> Result<CampaignSummary> {
        let m = self.plant.model();
        let a_values: &[f64] = if update_scales.is_empty() {
            &[1.0]
        } else {
            update_scales
        };
        let convergence = ConvergenceReport::build(
            m.p(),
            &self.design.l,
            &self.design.q,
            Some((self.reference, m.d())),
            a_values,
            self.seed,
        )?;
        Ok(CampaignSummary {
            engine,
            kappa_hat: convergence.kappa_hat.unwrap_or(f64::INFINITY),
            convergence,
            violations: records.iter().filter(|r| r.constraint_violated).count(),
            a_progression: records.iter().map(|r| r.a).collect(),
            per_trial: records,
            halt_reason,
            input_hash: self.hash(),
        })
    }

    fn conventional(&self) -> Result<CampaignSummary> {
        let records = run_conventional(
            self.plant,
            self.design,
            self.reference,
            self.u0,
            self.trials,
            self.y_max,
        )?;
        self.summarize(Engine::Conventional, records, &[1.0], HaltReason::Completed)
    }

    fn railc(&self, cfg: &RailcConfig) -> Result<CampaignSummary> {
        let run = run_railc(self.plant, self.design, self.reference, cfg)?;
        // scales that actually drove an update
        let used: Vec<f64> = run
            .records
            .iter()
            .filter(|r| r.j < self.trials && run.halt.is_none_or(|h| r.j < h.trial))
            .map(|r| r.a)
            .collect();
        let halt = match run.halt {
            Some(h) => HaltReason::Infeasible {
                trial: h.trial,
                deficit: h.deficit,
            },
            None => HaltReason::Completed,
        };
        self.summarize(Engine::Railc, run.records, &used, halt)
    }
}

/// Runs the configured mode and writes its files under `cfg.output`.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CampaignOutput> {
    let exp = cfg.prepare()?;
    exp.config.check_assumptions(&exp.plant)?;
    run_experiment(&exp)
}

pub fn run_experiment(exp: &Experiment) -> Result<CampaignOutput> {
    let cfg = &exp.config;
    let inputs = Inputs {
        plant: &exp.plant,
        design: &exp.design,
        reference: &exp.reference,
        u0: &exp.u0,
        y_max: cfg.y_max,
        trials: cfg.trials,
        seed: cfg.seed,
    };
    let railc_cfg = exp.railc_config();
    let (conventional, railc) = match cfg.mode {
        Mode::Conventional => (Some(inputs.conventional()?), None),
        Mode::Railc => (None, Some(inputs.railc(&railc_cfg)?)),
        Mode::Compare => {
            let (c, r) = std::thread::scope(|s| {
                let c = s.spawn(|| inputs.conventional());
                let r = inputs.railc(&railc_cfg);
                (c.join().expect("conventional campaign thread panicked"), r)
            });
            (Some(c?), Some(r?))
        }
    };
    let out = CampaignOutput {
        out_dir: PathBuf::from(&cfg.output),
        eps_bar: exp.eps_bar,
        conventional,
        railc,
    };
    write_output(&out, exp)?;
    Ok(out)
}

fn write_output(out: &CampaignOutput, exp: &Experiment) -> Result<()> {
    fs::create_dir_all(&out.out_dir)?;
    let compare = exp.config.mode == Mode::Compare;
    for summary in out.summaries() {
        let dir = if compare {
            out.out_dir.join(summary.engine.name())
        } else {
            out.out_dir.clone()
        };
        write_summary(&dir, summary)?;
    }
    fs::write(out.out_dir.join("report.txt"), report_text(out, exp)?)?;
    Ok(())
}

/// Writes records.jsonl, trials.csv and trajectories.csv into `dir`.
pub fn write_summary(dir: &Path, summary: &CampaignSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut jsonl = BufWriter::new(File::create(dir.join("records.jsonl"))?);
    for record in &summary.per_trial {
        let line = serde_json::to_string(&RecordLine::Trial(record.clone()))
            .map_err(|e| crate::error::Error::Io(e.to_string()))?;
        writeln!(jsonl, "{line}")?;
    }
    if let HaltReason::Infeasible { trial, deficit } = summary.halt_reason {
        let line = serde_json::to_string(&RecordLine::Halt(Halt { trial, deficit }))
            .map_err(|e| crate::error::Error::Io(e.to_string()))?;
        writeln!(jsonl, "{line}")?;
    }
    jsonl.flush()?;
    fs::write(dir.join("trials.csv"), trials_csv(&summary.per_trial))?;
    fs::write(
        dir.join("trajectories.csv"),
        trajectories_csv(&summary.per_trial),
    )?;
    Ok(())
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(TRIALS_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.j, r.norm_e2, r.norm_e_inf, r.norm_y_inf, r.a
        );
    }
    s
}

pub fn trajectories_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(TRAJECTORIES_HEADER);
    s.push('\n');
    for r in records {
        for n in 0..r.u.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.j, n, r.u[n], r.y[n], r.r_effective[n]
            );
        }
    }
    s
}

pub fn parse_records(jsonl: &str) -> Result<Vec<RecordLine>> {
    jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| crate::error::Error::Parse {
                line: Some(i + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

fn report_text(out: &CampaignOutput, exp: &Experiment) -> Result<String> {
    let prop7 = check_prop7(exp.plant.model().p(), &exp.design.l, &exp.design.q)?;
    let mut s = String::new();
    let _ = writeln!(s, "mode = {:?}", exp.config.mode);
    let _ = writeln!(s, "samples = {}", exp.config.samples);
    let _ = writeln!(s, "trials = {}", exp.config.trials);
    let _ = writeln!(s, "y_max = {}", exp.config.y_max);
    let _ = writeln!(s, "eps_bar = {}", out.eps_bar);
    let _ = writeln!(s, "prop7_gamma2 = {}", prop7.gamma2);
    let _ = writeln!(s, "prop7_pqpinv_norm2 = {}", prop7.pqpinv_norm2);
    let _ = writeln!(s, "prop7_sufficient = {}", prop7.sufficient);
    for summary in out.summaries() {
        let name = summary.engine.name();
        let _ = writeln!(s, "\n[{name}]");
        let _ = writeln!(s, "input_hash = {}", summary.input_hash);
        let _ = writeln!(s, "violations = {}", summary.violations);
        let _ = writeln!(s, "kappa_hat = {}", summary.kappa_hat);
        match summary.halt_reason {
            HaltReason::Completed => {
                let _ = writeln!(s, "halt = completed");
            }
            HaltReason::Infeasible { trial, deficit } => {
                let _ = writeln!(s, "halt = infeasible at trial {trial}, deficit {deficit}");
            }
        }
        let a: Vec<String> = summary
            .a_progression
            .iter()
            .map(|a| a.to_string())
            .collect();
        let _ = writeln!(s, "a_progression = [{}]", a.join(", "));
        if let Some(last) = summary.per_trial.last() {
            let _ = writeln!(s, "final_norm_e2 = {}", last.norm_e2);
        }
        s.push_str(&summary.convergence.to_kv_text());
    }
    Ok(s)
}
