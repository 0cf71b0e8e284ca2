//! Association-rule mining and the accuracy experiment comparing rules mined
//! from original and perturbed data.

pub mod apriori;
pub mod experiment;
pub mod itemize;
pub mod synth;

pub use apriori::{accuracy, apriori, frequent_itemsets, meets, AssociationRule, FrequentItemset};
pub use experiment::{
    format_rules, run_experiment, AccuracyReport, ExperimentResult, ExperimentSpec, MinedSample, MiningParams,
    ReportRow, DEFAULT_SCHEDULE,
};
pub use itemize::Itemizer;
pub use synth::{PlantedRule, SyntheticModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MiningError {
    #[error("no transactions to mine")]
    EmptyTransactions,
    #[error("{name} must be in (0, 1], got {value}")]
    InvalidThreshold { name: &'static str, value: f64 },
    #[error("no rules were mined from the original data; accuracy is undefined")]
    NoBaselineRules,
    #[error("itemizer used before fit")]
    UnfittedItemizer,
    #[error("number of bins must be at least 1")]
    InvalidBins,
    #[error("dataset attributes differ from those the itemizer was fitted on")]
    ItemizerSchemaMismatch,
    #[error("original has {original} rows but perturbed has {perturbed}")]
    MisalignedDatasets { original: usize, perturbed: usize },
    #[error("cannot sample {wanted} records from {available}")]
    InsufficientRecords { wanted: usize, available: usize },
    #[error("malformed report line: {0:?}")]
    MalformedReport(String),
}
