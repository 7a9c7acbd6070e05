//! Theoretical tail indexes and tail constants.
//!
//! The one-dimensional engine is the moment equation `E|σ z|^α = 1` for a
//! standard normal `z`: each transformed component of a diagonal or
//! triangular SRE has a Gaussian coefficient `N(0, σ²)`, its tail index is
//! the unique positive root in α, and the Goldie constants follow from the
//! same moment function. For general coefficient structures the scalar
//! equation is replaced by the root of the spectral functional
//! `Λ_n(α) = n^{-1} log E‖M_1 ⋯ M_n‖^α`, estimated by sequential Monte
//! Carlo over renormalized matrix products.

mod constants;
mod moments;
mod report;
mod smc;
mod spectral;

pub use constants::{
    forward_constant_triangular, goldie_constant, ForwardConstants, McEstimate, ScalarSre,
};
pub use moments::{
    gaussian_abs_moment, log_gaussian_abs_moment, moment_log_derivative,
    solve_component_tail_index, E_LOG_ABS_STD_NORMAL, EULER_MASCHERONI, SIGMA_ROOT_BOUNDARY,
};
pub use report::{
    tail_indexes_simdiag, tail_indexes_triangular, tail_report_spectral, ComponentTail,
    TailConstants, TailMethod, TailReport,
};
pub use spectral::{solve_spectral_tail_index, SpectralSolution};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TailError {
    #[error("no positive root: sigma = {sigma} is at or beyond the stationarity boundary")]
    NoRoot { sigma: f64 },
    #[error("alpha_1 = alpha_2 within tolerance; the equal-index case has no known solution")]
    TieUndetermined,
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("spectral functional has no sign change on (0, {0}]")]
    NoSignChange(f64),
    #[error("non-positive Goldie constant estimate (finite-sample artifact; enlarge n_mc)")]
    NonPositiveEstimate,
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
}
