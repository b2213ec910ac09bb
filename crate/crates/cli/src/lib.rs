//! `railc` command line: analyze a design, run or compare campaigns, or run the
//! built-in pendulum demo.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use railc_core::analysis::{check_prop7, ConvergenceReport};
use railc_core::error::{Error, Result};
use railc_core::harness::{
    demo_config, load_config, run_campaign, CampaignOutput, ExperimentConfig, HaltReason, Mode,
};

#[derive(Debug, Parser)]
#[command(
    name = "railc",
    version,
    about = "Lifted ILC with output-constraint-aware reference adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the convergence certificates of a config's design
    Analyze {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the mode named in the config
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run conventional ILC and RAILC side by side
    Compare {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the built-in pendulum scenario and write its data files
    Demo {
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Args)]
struct Overrides {
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(out) = &self.out {
            cfg.output = out.to_string_lossy().into_owned();
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("RAILC_LOG", "warn");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

/// 2 for a violated assumption or an infeasible adaptation, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::AssumptionViolated { .. } | Error::Infeasible { .. } => 2,
        _ => 1,
    }
}

/// Entry point shared by the binary and the tests. `args` includes the program name.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Analyze { config, seed } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = ExperimentConfig::from_toml(&text)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            analyze(&cfg)?;
            Ok(0)
        }
        Command::Run { config, overrides } => {
            let mut cfg = load_config(&config)?;
            overrides.apply(&mut cfg);
            campaign(&cfg)
        }
        Command::Compare { config, overrides } => {
            let mut cfg = load_config(&config)?;
            cfg.mode = Mode::Compare;
            overrides.apply(&mut cfg);
            campaign(&cfg)
        }
        Command::Demo { overrides } => {
            let mut cfg = demo_config();
            overrides.apply(&mut cfg);
            campaign(&cfg)
        }
    }
}

fn analyze(cfg: &ExperimentConfig) -> Result<()> {
    let exp = cfg.prepare()?;
    let model = exp.plant.model();
    let report = ConvergenceReport::build(
        model.p(),
        &exp.design.l,
        &exp.design.q,
        Some((&exp.reference, model.d())),
        &[1.0],
        cfg.seed,
    )?;
    let prop7 = check_prop7(model.p(), &exp.design.l, &exp.design.q)?;
    print!("{report}");
    println!("eps_bar = {}", exp.eps_bar);
    println!(
        "prop7 = {}",
        if prop7.sufficient {
            "sufficient: threshold convergence holds for every a in (0, 1]"
        } else {
            "not established"
        }
    );
    Ok(())
}

fn campaign(cfg: &ExperimentConfig) -> Result<i32> {
    let out = run_campaign(cfg)?;
    print_summary(&out);
    Ok(match out.halted() {
        Some(_) => 2,
        None => 0,
    })
}

fn print_summary(out: &CampaignOutput) {
    println!("output = {}", out.out_dir.display());
    println!("eps_bar = {}", out.eps_bar);
    for s in out.summaries() {
        let final_e2 = s.per_trial.last().map_or(f64::NAN, |r| r.norm_e2);
        println!(
            "{}: trials = {}, violations = {}, final |e|2 = {final_e2}, kappa_hat = {}",
            s.engine.name(),
            s.per_trial.len(),
            s.violations,
            s.kappa_hat
        );
        if let HaltReason::Infeasible { trial, deficit } = s.halt_reason {
            eprintln!(
                "error: {}: adaptation infeasible at trial {trial} (deficit {deficit:e})",
                s.engine.name()
            );
        }
    }
}
