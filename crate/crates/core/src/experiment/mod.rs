//! Reproducible experiment drivers behind the command-line tool.

mod config;
mod instance;
mod runner;

pub use config::{BnChoice, DataSection, ExperimentConfig, ExperimentKind, ModelSection, TheorySection, TrainSection};
pub use instance::{
    build_instance, compare_settings, panel_data, perturbed_graph, recover_settings, recovery_data, recovery_graph, Instance, Setting,
};
pub use runner::{
    cmd_compare, cmd_generate, cmd_panel, cmd_recover, cmd_theory_check, cmd_train, curves_csv, output_dir, run_instance, run_sweep,
    summary_csv, Manifest, RunResult,
};
