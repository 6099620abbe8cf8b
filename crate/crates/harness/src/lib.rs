//! Experiment harness: configuration, Monte Carlo batches, the quadrature
//! reference for marginals, and deterministic file output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod gradinf;
pub mod marginal;
pub mod mc;
pub mod output;

pub use config::{parse_config, Algorithm, ExperimentConfig, InitBox, Overrides};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, ExperimentOutcome, Mode};
pub use marginal::{reference_marginal, tv_distance, BinSpec, MarginalHistogram};
pub use mc::{final_mean_histogram_2d, run_monte_carlo, sample_init_ensemble, Histogram2d};
