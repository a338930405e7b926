//! Rank statistics, regression and bootstrap inference for explaining fuzzer
//! benchmark outcomes by fuzzer choice and benchmark properties.

pub mod bootstrap;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod props;
pub mod ranking;
pub mod regression;
pub mod report;
mod serde_util;
pub mod special;
pub mod stats;
pub mod synth;

pub use bootstrap::{BootstrapMethod, BootstrapSpec, CiEntry, CiTable, WildWeights};
pub use data::{load_dataset, validate_dataset, DataFormat, Dataset, PropertyKey, TrialRecord};
pub use error::{Error, Result};
pub use ranking::{fractional_ranks, rank_dataset, RankScope, RankedDataset};
pub use regression::{DesignSpec, ExplainableFit, RegressionFit, SlopeEstimate};
pub use stats::{EffectSize, PairwiseTable};
