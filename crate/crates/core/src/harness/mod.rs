//! Config files, the built-in demo scenario and campaign execution with
//! JSON-lines/CSV persistence.

mod campaign;
mod config;
mod demo;

pub use campaign::{
    input_hash, parse_records, run_campaign, run_experiment, trajectories_csv, trials_csv,
    write_summary, CampaignOutput, CampaignSummary, Engine, HaltReason, RecordLine,
    TRAJECTORIES_HEADER, TRIALS_HEADER,
};
pub use config::{
    load_config, DesignSpec, DisturbanceSpec, EpsBarSpec, Experiment, ExperimentConfig, Mode,
    PlantSpec, ReferenceSpec,
};
pub use demo::{demo_config, make_demo_plant, open_loop};
pub mod constants {
    pub use super::demo::{
        DISTURBANCE, EPS_BAR_SAFETY, FEEDBACK_GAIN, INPUT_GAIN, PENDULUM_OMEGA,
        REFERENCE_AMPLITUDE, REFERENCE_FREQUENCY, SAMPLES, SAMPLE_TIME, TRIALS, WEIGHTS, Y_MAX,
    };
}
