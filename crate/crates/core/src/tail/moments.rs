//! Absolute moments of centered Gaussians and the moment-equation root.
//!
//! For `z ~ N(0,1)` and `σ > 0`,
//!
//! ```text
//! E|σz|^α = σ^α 2^{α/2} Γ((α+1)/2) / √π
//! ```
//!
//! evaluated in log space. `α ↦ log E|σz|^α` is strictly convex, vanishes at
//! α = 0 with slope `log σ + E log|z|`, and grows without bound, so a positive
//! root of `E|σz|^α = 1` exists exactly when `σ < exp(-E log|z|)` and is
//! unique. The log-derivative at a root equals `m_α = E[|σz|^α log|σz|] > 0`,
//! the normalizing constant in the Goldie tail formula.

use super::TailError;
use statrs::function::gamma::{digamma, ln_gamma};

pub const EULER_MASCHERONI: f64 = 0.577215664901532861;

/// `E log|z| = -(γ + log 2)/2` for standard normal z.
pub const E_LOG_ABS_STD_NORMAL: f64 = -(EULER_MASCHERONI + std::f64::consts::LN_2) / 2.0;

/// Largest σ (exclusive) for which the moment equation has a positive root:
/// `exp(-E log|z|) ≈ 1.8874`.
pub const SIGMA_ROOT_BOUNDARY: f64 = 1.8873645212254033;

const HALF_LN_PI: f64 = 0.5723649429247001;

/// `log E|σz|^α`, finite for all α > 0, σ > 0.
pub fn log_gaussian_abs_moment(alpha: f64, sigma: f64) -> f64 {
    assert!(alpha > 0.0 && sigma > 0.0);
    alpha * sigma.ln() + 0.5 * alpha * std::f64::consts::LN_2 + ln_gamma((alpha + 1.0) / 2.0)
        - HALF_LN_PI
}

/// `E|σz|^α` via log-space evaluation.
pub fn gaussian_abs_moment(alpha: f64, sigma: f64) -> f64 {
    log_gaussian_abs_moment(alpha, sigma).exp()
}

/// `d/dα log E|σz|^α = log σ + (log 2 + ψ((α+1)/2))/2`.
///
/// At a root of the moment equation this equals `m_α = E[|σz|^α log|σz|]`.
pub fn moment_log_derivative(alpha: f64, sigma: f64) -> f64 {
    assert!(alpha > 0.0 && sigma > 0.0);
    sigma.ln() + 0.5 * (std::f64::consts::LN_2 + digamma((alpha + 1.0) / 2.0))
}

/// Unique positive root of `E|σz|^α = 1`.
///
/// Bracketing plus bisection on the convex log-moment, finished with Newton;
/// the root satisfies `|log E|σz|^α| < 1e-12`.
pub fn solve_component_tail_index(sigma: f64) -> Result<f64, TailError> {
    assert!(sigma > 0.0);
    if sigma.ln() + E_LOG_ABS_STD_NORMAL >= 0.0 {
        return Err(TailError::NoRoot { sigma });
    }
    let f = |alpha: f64| log_gaussian_abs_moment(alpha, sigma);
    let mut hi = 1.0_f64;
    while f(hi) <= 0.0 {
        hi *= 2.0;
        assert!(hi < 1e12, "moment root bracket runaway for sigma = {sigma}");
    }
    let mut lo = hi / 2.0;
    while f(lo) >= 0.0 {
        lo /= 2.0;
        if lo < 1e-300 {
            return Err(TailError::NoRoot { sigma });
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * hi.max(1.0) {
            break;
        }
    }
    let mut alpha = 0.5 * (lo + hi);
    for _ in 0..6 {
        let val = f(alpha);
        let slope = moment_log_derivative(alpha, sigma);
        let next = alpha - val / slope;
        if next.is_finite() && next > 0.0 {
            alpha = next;
        }
        if val.abs() < 1e-13 {
            break;
        }
    }
    debug_assert!(f(alpha).abs() < 1e-12);
    Ok(alpha)
}
