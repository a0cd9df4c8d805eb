//! Probabilistic class-specific discriminant analysis.
//!
//! A one-class-versus-rest subspace method: the negative class is split into
//! subclasses, a low-dimensional projection is learned that pushes negative
//! subclass means away from the positive mean, and two Gaussians in that
//! subspace give a posterior-ratio classifier and a distance ranking.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod inference;
pub mod kernel;
pub mod metrics;
pub mod numkit;
pub mod pcsda;
pub mod pipeline;
pub mod specreg;
pub mod subclass;
pub mod synthetic;

pub use dataset::{Label, LabelColumn, LabeledDataset, MulticlassDataset, SampleMatrix, Split, SplitSpec};
pub use error::{Error, Result};
pub use inference::{Decision, RankResult};
pub use kernel::{KernelConfig, KernelMap, SigmaRule};
pub use numkit::{Ridge, SymMatrix};
pub use pcsda::{FitConfig, PcsdaModel, Solver, Subclasses, Subspace};
pub use pipeline::{Pipeline, TrainConfig};
pub use subclass::SubclassAssignment;
