//! Experiment runner: classifiers, the training loop under each curriculum,
//! artifact preparation, preset tables and plots.

mod classifier;
mod config;
mod pipeline;
mod plot;
mod table;
mod train;

pub use classifier::{
    evaluate, evaluate_images, evaluate_prefix, load_classifier, save_classifier, ClassifierConfig, ClassifierNet,
    ClassifierSpec, Evaluation,
};
pub use config::{ExperimentConfig, CONFIG_VERSION};
pub use pipeline::{prepare, prepare_data, Artifacts, PolicyReport, PrepareConfig};
pub use plot::{collect_runs, emit_plots, render_plot};
pub use table::{
    classifier_for, preset_cells, run_table, Bundle, Cell, CellResult, Preset, Scale, ScaleSettings, TableContext,
};
pub use train::{
    augment, augment_with, run_experiment, seeded_rng, train_classifier, AugmentParams, EpochRow, RunInputs,
    RunReport, METRICS_HEADER,
};
