//! Parisian and classical ruin probabilities for integrated Gaussian risk
//! processes `R_u(t) = u + c∫₀ᵗe^{−δ} − ∫₀ᵗe^{−δ}Z`: exact grid simulation,
//! importance sampling, and Gaussian-tail approximations.

pub mod acceptance;
pub mod asympt;
pub mod cli;
pub mod config;
pub mod error;
pub mod gauss_sim;
pub mod kernels;
pub mod montecarlo;
pub mod quad;
pub mod riskproc;
pub mod special;

pub use asympt::{
    approx_ruin, log_normal_tail, normal_tail, ruin_time_limit_cdf, AsymptoticReport,
};
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use gauss_sim::{Grid, RngStream};
pub use kernels::CovKernel;
pub use montecarlo::{EstimateResult, Estimator, RuinKind, WindowRule};
pub use riskproc::DiscountSpec;
pub use special::VarianceModel;
