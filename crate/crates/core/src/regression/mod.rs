//! Least squares, design matrices and the fuzzer-by-property model.

pub mod design;
pub mod model;
mod ols;

pub use design::{build_design_matrix, rank_for_design, Design, DesignSpec, DEFAULT_MLR_PROPERTIES};
pub use model::{
    fit_explainable_model, per_fuzzer_slopes, Crossover, CrossoverRegion, ExplainableFit,
    ModelTerms, SlopeEstimate,
};
pub use ols::{ols_fit, Matrix, Qr, RegressionFit, RANK_TOLERANCE};
pub(crate) use ols::median;
