//! Pair-adaptive upload-circuit selection for one-vs-one multiclass tasks,
//! scored on low-weight Pauli features under ideal or finite-shot readout.
//!
//! Layers, bottom up: [`sim`] (statevector encoding), [`pauli`] (features and
//! measurement grouping), [`data`] (splits, PCA angles, pair tasks),
//! [`discrimination`] and [`probe`] (readout scoring), [`budget`]
//! (shot model), [`search`], [`baselines`], and [`pipeline`] / [`report`]
//! for whole runs.

pub mod baselines;
pub mod budget;
pub mod config;
pub mod data;
pub mod discrimination;
pub mod pauli;
pub mod pipeline;
pub mod probe;
pub mod report;
pub mod search;
pub mod sim;

pub use config::{Regime, RunConfig, Strategy};
pub use data::{Dataset, PairTask};
pub use pauli::{FeatureMatrix, MeasurementGroup, Pauli, PauliFamily, PauliString};
pub use report::RunReport;
pub use sim::{AngleVector, GateBlock, StateVector, UploadSequence};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Prepare(#[from] search::PrepareError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
}
