//! Strict stationarity of the SRE via the top Lyapunov exponent.
//!
//! The SRE has an almost surely unique strictly stationary causal solution
//! when `γ = inf_n n^{-1} E log ‖M_1 ⋯ M_n‖ < 0`. The exponent is estimated
//! by Monte Carlo over renormalized random matrix products; for diagonal and
//! triangular q = 1 structures it also has the closed form
//! `γ = max_i (log σ_i + E log|z|)` with `σ_i² = Σ_j D_{ii,j}²`.
//!
//! Two cheaper certificates are provided: the Kronecker sufficient condition
//! `ρ(E[M ⊗ M]) < 1`, and the scalar ARCH(1) threshold
//! `a² < 2 e^γ_EM ≈ 3.5621` (the digamma identity `ψ(1) = -γ_EM` turns the
//! classical `exp(-ψ(1) + log 2)` into that closed form).

use rayon::prelude::*;
use serde::Serialize;

use crate::model::ModelSpec;
use crate::rng::NormalStream;
use crate::structure::{classify, op_norm, spectral_radius, StructureKind};
use crate::tail::{E_LOG_ABS_STD_NORMAL, EULER_MASCHERONI};

/// Steps between renormalizations of the running product. Only guards
/// against under/overflow; invisible to the estimate.
const RENORM_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stationary,
    NonStationary,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovReport {
    pub gamma_hat: f64,
    pub stderr: f64,
    pub n_horizon: usize,
    pub replicas: usize,
    /// `max_i (log σ_i + E log|z|)` when the structure admits it.
    pub closed_form: Option<f64>,
    pub verdict: Verdict,
}

/// Monte Carlo estimate of the top Lyapunov exponent.
///
/// Each replica multiplies `n_horizon` companion draws, renormalizing every
/// ten steps by the operator norm and accumulating log norms; `gamma_hat`
/// averages the per-replica rates and the verdict applies a two-sided 2σ
/// rule with an explicit `Inconclusive` band around zero.
pub fn lyapunov_estimate(
    spec: &ModelSpec,
    n_horizon: usize,
    replicas: usize,
    seed: u64,
) -> LyapunovReport {
    assert!(n_horizon >= 1 && replicas >= 2);
    let template = spec.companion_template();
    let dim = template.dim();
    let rates: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut stream = NormalStream::new(seed, r as u64);
            let mut coeffs = vec![0.0; template.q() * template.l()];
            let mut product = nalgebra::DMatrix::<f64>::identity(dim, dim);
            let mut m = nalgebra::DMatrix::<f64>::zeros(dim, dim);
            let mut log_norm_acc = 0.0;
            for step in 1..=n_horizon {
                stream.fill_normals(&mut coeffs);
                template.materialize_into(&coeffs, &mut m);
                product = &m * &product;
                if step % RENORM_EVERY == 0 {
                    let nrm = op_norm(&product);
                    log_norm_acc += nrm.ln();
                    product /= nrm;
                }
            }
            log_norm_acc += op_norm(&product).ln();
            log_norm_acc / n_horizon as f64
        })
        .collect();
    let mean = rates.iter().sum::<f64>() / replicas as f64;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (replicas as f64 - 1.0);
    let stderr = (var / replicas as f64).sqrt();
    let verdict = if mean + 2.0 * stderr < 0.0 {
        Verdict::Stationary
    } else if mean - 2.0 * stderr > 0.0 {
        Verdict::NonStationary
    } else {
        Verdict::Inconclusive
    };
    LyapunovReport {
        gamma_hat: mean,
        stderr,
        n_horizon,
        replicas,
        closed_form: closed_form_gamma(spec),
        verdict,
    }
}

/// Closed-form exponent for q = 1 diagonal/triangular structures:
/// `γ = max_i E log |Σ_j m_j D_ii,j| = max_i (log σ_i + E log|z|)`.
pub fn closed_form_gamma(spec: &ModelSpec) -> Option<f64> {
    if spec.q() != 1 {
        return None;
    }
    let dec = classify(spec);
    match dec.kind {
        StructureKind::AlreadyDiagonal
        | StructureKind::SimDiagonalizable
        | StructureKind::SimTriangularizable2D => {
            let diags = dec.diagonals();
            let d = spec.d();
            let mut gamma = f64::NEG_INFINITY;
            for i in 0..d {
                let sigma_sq: f64 = diags.iter().map(|v| v[i] * v[i]).sum();
                if sigma_sq == 0.0 {
                    // A transformed component with no random coefficient
                    // contracts to pure noise; it never drives the exponent.
                    continue;
                }
                gamma = gamma.max(0.5 * sigma_sq.ln() + E_LOG_ABS_STD_NORMAL);
            }
            gamma.is_finite().then_some(gamma)
        }
        StructureKind::General => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KroneckerReport {
    /// `ρ(E[M ⊗ M])`.
    pub rho: f64,
    /// Whether the sufficient condition `ρ < 1` holds.
    pub sufficient: bool,
}

/// The second-moment sufficient condition.
///
/// Independence and zero mean of the slot draws kill the cross terms, so
/// `E[M ⊗ M] = M̄ ⊗ M̄ + Σ_ij S_ij ⊗ S_ij` in closed form, with `M̄` the
/// deterministic companion part and `S_ij` the slot placements.
pub fn kronecker_condition(spec: &ModelSpec) -> KroneckerReport {
    let template = spec.companion_template();
    let det = template.deterministic_part();
    let mut expected = det.kronecker(det);
    for k in 0..template.slots().len() {
        let s = template.placement_matrix(k);
        expected += s.kronecker(&s);
    }
    let rho = spectral_radius(&expected);
    KroneckerReport {
        rho,
        sufficient: rho < 1.0,
    }
}

/// Strict-stationarity threshold for the squared coefficient of a scalar
/// Gaussian ARCH(1): `2 e^{γ_EM} ≈ 3.5621`.
pub fn nelson_bound() -> f64 {
    2.0 * EULER_MASCHERONI.exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    #[test]
    fn nelson_bound_value() {
        // 2 exp(0.5772156649...) to full precision, 3.562 at four digits.
        assert_abs_diff_eq!(nelson_bound(), 3.5621448359803960, epsilon = 1e-12);
        assert!((nelson_bound() - 3.5622).abs() < 5e-4);
    }

    #[test]
    fn scalar_closed_form_and_mc_agree() {
        // gamma = log a + E log|z|; a = 1 gives -0.6352.
        let spec = ModelSpec::scalar(1.0, 1.0).unwrap();
        let report = lyapunov_estimate(&spec, 2_000, 200, 5);
        let closed = report.closed_form.unwrap();
        assert_abs_diff_eq!(closed, E_LOG_ABS_STD_NORMAL, epsilon = 1e-12);
        assert!(
            (report.gamma_hat - closed).abs() <= 3.0 * report.stderr,
            "gamma_hat {} vs closed {} (se {})",
            report.gamma_hat,
            closed,
            report.stderr
        );
        assert_eq!(report.verdict, Verdict::Stationary);
    }

    #[test]
    fn boundary_squared_coefficient_is_inconclusive() {
        // a^2 at the threshold: gamma = 0 exactly; the 2-sigma rule must
        // refuse to certify a sign.
        let spec = ModelSpec::scalar(nelson_bound().sqrt(), 1.0).unwrap();
        let report = lyapunov_estimate(&spec, 2_000, 200, 7);
        assert!(report.gamma_hat.abs() < 0.02, "gamma {}", report.gamma_hat);
        assert_eq!(report.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn scalar_verdicts_either_side_of_bound() {
        let stationary = ModelSpec::scalar(3.0f64.sqrt(), 1.0).unwrap();
        assert_eq!(
            lyapunov_estimate(&stationary, 2_000, 200, 11).verdict,
            Verdict::Stationary
        );
        let explosive = ModelSpec::scalar(2.0, 1.0).unwrap();
        assert_eq!(
            lyapunov_estimate(&explosive, 2_000, 200, 11).verdict,
            Verdict::NonStationary
        );
    }

    #[test]
    fn diagonal_closed_form_is_max_over_components() {
        let spec = ModelSpec::diagonal(&[0.5, 1.5]).unwrap();
        let closed = closed_form_gamma(&spec).unwrap();
        assert_abs_diff_eq!(closed, 1.5f64.ln() + E_LOG_ABS_STD_NORMAL, epsilon = 1e-12);
        assert_abs_diff_eq!(closed, -0.2297, epsilon = 1e-4);
        let report = lyapunov_estimate(&spec, 2_000, 200, 13);
        assert!(
            (report.gamma_hat - closed).abs() <= 3.0 * report.stderr,
            "gamma_hat {} vs closed {} (se {})",
            report.gamma_hat,
            closed,
            report.stderr
        );
    }

    #[test]
    fn triangular_closed_form_uses_diagonal_sigmas() {
        // U1 = [[a, b], [0, a]], U2 = diag(c, c~): sigma_1^2 = a^2 + c^2,
        // sigma_2^2 = a^2 + c~^2.
        let (a, b, c, ct) = (0.4, 1.0, 0.5, 1.1);
        let spec = ModelSpec::new(
            2,
            1,
            2,
            DMatrix::identity(2, 2),
            vec![
                DMatrix::from_row_slice(2, 2, &[a, b, 0.0, a]),
                DMatrix::from_row_slice(2, 2, &[c, 0.0, 0.0, ct]),
            ],
        )
        .unwrap();
        let closed = closed_form_gamma(&spec).unwrap();
        let expect = ((a * a + ct * ct) as f64).sqrt().ln() + E_LOG_ABS_STD_NORMAL;
        assert_abs_diff_eq!(closed, expect, epsilon = 1e-10);
    }

    #[test]
    fn subadditivity_in_expectation() {
        let spec = ModelSpec::new(
            2,
            2,
            1,
            DMatrix::identity(2, 2),
            vec![
                DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.4]),
                DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.0, 0.3]),
            ],
        )
        .unwrap();
        let short = lyapunov_estimate(&spec, 25, 400, 17);
        let long = lyapunov_estimate(&spec, 200, 400, 19);
        let combined = (short.stderr.powi(2) + long.stderr.powi(2)).sqrt();
        assert!(
            long.gamma_hat <= short.gamma_hat + 3.0 * combined,
            "long {} vs short {}",
            long.gamma_hat,
            short.gamma_hat
        );
    }

    #[test]
    fn scaling_all_coefficients_shifts_gamma_by_log_s() {
        // q = 1: M_t is linear in the coefficients, so gamma(sA) comes out
        // exactly gamma(A) + log s for the same seed.
        let spec = ModelSpec::diagonal(&[0.4, 0.7]).unwrap();
        let scaled = spec.scaled(1.75).unwrap();
        let base = lyapunov_estimate(&spec, 400, 50, 23);
        let shifted = lyapunov_estimate(&scaled, 400, 50, 23);
        assert_abs_diff_eq!(
            shifted.gamma_hat - base.gamma_hat,
            1.75f64.ln(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn kronecker_scalar_and_diagonal() {
        let scalar = ModelSpec::scalar(0.9, 1.0).unwrap();
        let rep = kronecker_condition(&scalar);
        assert_abs_diff_eq!(rep.rho, 0.81, epsilon = 1e-12);
        assert!(rep.sufficient);

        let diag = ModelSpec::diagonal(&[0.5, 0.8]).unwrap();
        let rep = kronecker_condition(&diag);
        assert_abs_diff_eq!(rep.rho, 0.64, epsilon = 1e-10);
        assert!(rep.sufficient);
    }

    #[test]
    fn kronecker_is_strictly_stronger_than_lyapunov() {
        // a^2 = 2: second-moment condition fails, Lyapunov still negative.
        let spec = ModelSpec::scalar(2.0f64.sqrt(), 1.0).unwrap();
        let rep = kronecker_condition(&spec);
        assert_abs_diff_eq!(rep.rho, 2.0, epsilon = 1e-12);
        assert!(!rep.sufficient);
        let closed = closed_form_gamma(&spec).unwrap();
        assert!(closed < 0.0, "gamma {closed}");
    }

    #[test]
    fn kronecker_radius_is_squared_spectral_radius_for_single_slot() {
        // With one slot and no deterministic part, E[M (x) M] = A (x) A.
        for a in [
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.9]),
            DMatrix::from_row_slice(3, 3, &[0.3, 0.1, 0.0, 0.0, 0.7, 0.2, 0.1, 0.0, 0.5]),
        ] {
            let d = a.nrows();
            let spec = ModelSpec::new(d, 1, 1, DMatrix::identity(d, d), vec![a.clone()]).unwrap();
            let rep = kronecker_condition(&spec);
            let rho_a = spectral_radius(&a);
            assert_abs_diff_eq!(rep.rho, rho_a * rho_a, epsilon = 1e-8);
        }
    }

    /// Whenever the moment equation has a root the closed-form exponent is
    /// negative (the moment condition implies stationarity).
    #[test]
    fn moment_root_implies_negative_gamma() {
        for sigma in [0.2, 0.7, 1.2, 1.6, 1.85] {
            let spec = ModelSpec::scalar(sigma, 1.0).unwrap();
            if crate::tail::solve_component_tail_index(sigma).is_ok() {
                assert!(closed_form_gamma(&spec).unwrap() < 0.0, "sigma {sigma}");
            }
        }
    }
}
