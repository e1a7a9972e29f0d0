//! Semiparametric fitting pipelines.

pub mod mle;
pub mod tf;

pub use mle::{
    mc_summary, mle_c_of_b, mle_fit, mle_partition, mle_solve_b, mle_tau, ClassSample, McSummary,
    MleConfig, MleResult,
};
pub use tf::{beta_factor, tf_fit, TfConfig, TfResult};
