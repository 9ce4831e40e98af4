//! Physics-informed networks trained with a locality-seeking sparsity
//! penalty, plus tools to extract and reuse the small circuits that survive.

pub mod activations;
pub mod autodiff;
pub mod bimt;
pub mod cli;
pub mod modular;
pub mod network;
pub mod problems;
pub mod trainer;

pub use activations::ActivationKind;
pub use autodiff::{Jet, Scalar, Tape};
pub use bimt::{LocalityCost, PhaseSchedule, RegularizerConfig};
pub use network::{Architecture, GeometricNetwork, NetworkSnapshot, PruneStats};
pub use problems::{CollocationCounts, CollocationSet, ErrorReport, ProblemSpec};
pub use trainer::{train, train_instances, RunRecord, TrainConfig, TrainError};
