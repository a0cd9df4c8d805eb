//! Evaluation protocol: cross validation, configured experiments and a
//! quick built-in self check.

pub mod config;
pub mod cv;
pub mod experiment;
pub mod selftest;

pub use config::{ExperimentConfig, Mode};
pub use cv::{cross_validate, CvCell, CvGrid, CvOutcome, CvSettings, Objective};
pub use experiment::{evaluate, run_experiment, run_on, EvalReport};
pub use selftest::{selftest, Check};
