//! Experiment engine: training-size, noise, blur, and SCI-threshold sweeps
//! over a synthetic chip pool.
//!
//! Each sweep renders the pool once (pool sizes mimic a small, imbalanced
//! survey: see [`ShapeClass::reference_pool_size`]), then for every sweep
//! point and trial draws a fresh train/test split with seed
//! `master_seed XOR trial`, builds a dictionary from clean training chips,
//! and classifies the (optionally corrupted) tests. Trials may run in
//! parallel; results are always collected in (sweep value, trial, sample)
//! order, so outputs are byte-identical across runs unless timing is
//! recorded.
//!
//! Files written to `output_dir`, prefixed with the experiment's
//! [`ExperimentKind::file_stem`]:
//!
//! | file | contents |
//! |------|----------|
//! | `_config.txt` | the effective configuration |
//! | `_records.csv` | one [`TrialRecord`] per row |
//! | `_accuracy.csv` | mean accuracy and standard error per sweep value |
//! | `_per_class.csv` | per-class accuracy (training-size sweep) |
//! | `_confusion_<v>.csv` | column-normalized confusion matrix at value `v` |
//! | `_table.csv` | SCI mean/std per class and pooled (SCI sweep) |
//! | `_kappa.csv` | acceptance counts and both scoring conventions per κ |
//!
//! Every CSV starts with a `# sparse-atr <what> v<N>` comment line.
//!
//! [`ShapeClass::reference_pool_size`]: crate::imaging::ShapeClass::reference_pool_size

mod config;
mod plots;
mod records;
mod sweeps;

pub use config::{harness_solver_options, ExperimentConfig, ExperimentKind};
pub use plots::emit_plot_scripts;
pub use records::{
    read_records, write_records, ConfusionMatrix, MeanSe, TrialRecord, SCHEMA_VERSION,
};
pub use sweeps::{
    generate_pool, run_blur_sweep, run_experiment, run_noise_sweep, run_sci_sweep,
    run_training_size_sweep, AccuracyRow, ClassAccuracyRow, ExperimentOutcome, KappaRow, Pool,
    Sample, SciGroup, SciRow,
};
