//! Datasets, synthetic residuals, BD-rate and the end-to-end experiment.

pub mod bdrate;
pub mod dataset;
pub mod experiment;
pub mod sep_klt;
pub mod synth;

pub use bdrate::{bd_log_delta, bd_rate, RdCurve};
pub use dataset::ResidualDataset;
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, ModeSpec};
pub use sep_klt::{sep_klt_train, SepKlt};
pub use synth::{synth_modes, synth_residuals, SynthModel};
