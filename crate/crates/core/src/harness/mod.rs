//! Metrics, experiment scenarios, result files and the command line.

mod cli;
mod config;
mod emit;
mod gradcheck;
mod metrics;
mod scenarios;

pub use cli::{run_cli, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
pub use config::{
    mode_label, DatasetSource, ExperimentConfig, MaskConfig, MaskKind, Method, ModelSection, OneOrMany, Scenario,
    DEFAULT_GP_SHRINKAGE, DEFAULT_KNN_K, DEFAULT_MC_RANK,
};
pub use emit::{emit_results, load_results, plot_csv, summary_csv, PLOT_DIR, RESULTS_FILE, SUMMARY_FILE, SUMMARY_HEADER};
pub use gradcheck::{gradcheck, gradcheck_instance, GradcheckReport, ABS_FLOOR, FD_STEP, GRADCHECK_TOL};
pub use metrics::{epsilon_metric, rmse};
pub use scenarios::{
    cells, complete, held_out_columns, prepare, run_cell, run_cells, run_experiment, thread_count, Cell, CellRecord,
    Completion, ExperimentResult, Prepared, Setting, EVALUATION, GENERATION_QUERIES, GRADCHECK_INSTANCES,
    THREADS_ENV,
};
