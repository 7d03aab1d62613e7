//! Experiment orchestration: configuration, tuning, evaluation, reports,
//! simulated-user ΔGAP analysis and long-tail plot data.

mod config;
mod experiment;
mod gapcalc;
mod report;
mod tailplot;

pub use config::{
    default_ap_k, DataSource, EvaluationConfig, ExperimentConfig, GroupSource, ModelSpec,
    PopularityScope, SplitConfig, TuningConfig,
};
pub use experiment::{
    evaluate, fit_model, load_dataset, mean_average_precision, merge_params, prepare,
    run_experiment, run_experiment_with, split_seed, tune, tune_models, tune_seed, ExperimentReport,
    GroupSummary, ModelEvaluation, Prepared, Provenance, TunePoint, TuneResult, GROUP_LABELS,
};
pub use gapcalc::{
    gapcalc, parse_records, read_records, render_gapcalc_kv, render_gapcalc_table, welch_greater,
    GapCalcRow, Measure, Role, SimulatedUserRecord, WelchTest,
};
pub use report::{render_kv, render_table, render_tuning, write_atomically, write_report};
pub use tailplot::{emit_tail_plot_data, TailPlot};
