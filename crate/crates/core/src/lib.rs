//! Stationarity and tail analysis for BEKK-ARCH processes.
//!
//! A BEKK-ARCH(q, 0, l) process
//!
//! ```text
//! X_t = H_t^{1/2} Z_t,    H_t = C + Σ_{i=1}^q Σ_{j=1}^l A_ij X_{t-i} X_{t-i}' A_ij'
//! ```
//!
//! with Gaussian noise admits an exact stochastic-recurrence-equation (SRE)
//! representation `V_t = M_t V_{t-1} + Q_t` on the stacked state
//! `V_t = (X_t', ..., X_{t-q+1}')'`, where `M_t` is a random companion matrix
//! whose top block row holds `M_{i,t} = Σ_j m_{i,j,t} A_ij` with i.i.d.
//! standard normal `m_{i,j,t}`, and `Q_t` stacks one `N(0, C)` draw over zeros.
//!
//! The crate decides strict stationarity of the SRE (top Lyapunov exponent,
//! Kronecker sufficient condition), computes per-component theoretical tail
//! indexes and tail constants for diagonal, triangular, and general coefficient
//! structures, simulates the stationary law with reproducible parallel
//! randomness, and confronts the theory with Hill-type tail estimates.

pub use nalgebra;

pub mod assumptions;
pub mod estimator;
pub mod fixtures;
pub mod model;
pub mod rng;
pub mod sim;
pub mod stationarity;
pub mod structure;
pub mod tail;

pub use model::{CompanionTemplate, ModelError, ModelSpec};
pub use structure::{StructureDecomposition, StructureError, StructureKind};
