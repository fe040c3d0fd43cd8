//! Experiment orchestration: configs, seeded runs, aggregation and output files.

mod config;
mod experiment;
mod output;
mod plot;
mod run;

pub use config::{
    Algorithm, ExperimentConfig, ExperimentKind, LinearConfig, Sweep, SweepAxis, PRESET_BETA_C,
    PRESET_BONUS_SCALE,
};
pub use experiment::{aggregate, run_experiment, ExperimentResult, RunRecord, Series, TraceRecord};
pub use output::{
    emit_outputs, read_regret_csv, render_plot, write_regret_csv, EmittedFiles, FinalRegretRow,
    RunSummary, Summary, CSV_HEADER, SUMMARY_SCHEMA,
};
pub use plot::{render as render_chart, Line};
pub use run::{
    build_learner, env_seed, make_instance, run_learner, run_seed, run_single, sweep_points,
    Instance, PreparedInstance, RegretTrace, RunOutput, SweepPoint, NO_SWEEP,
};
