//! Per-component tail indexes for diagonal and triangular structures.
//!
//! In the transformed coordinates `Y = P X`, component i of a simultaneously
//! diagonalizable family follows the scalar SRE with coefficient
//! `Σ_j m_j D_ii,j ~ N(0, σ_i²)`, so its tail index is the moment-equation
//! root `α_i^(Y)`. Back in original coordinates `X_i = Σ_j P^{ij} Y_j`, and
//! the index of a sum of regularly varying terms is the smallest index among
//! the terms that actually enter — provided the smallest one enters exactly
//! once, or (for l = 1) the minimizing transformed components share one
//! coefficient value and hence collapse to a single SRE. Anything else is
//! reported `Undetermined`; the theory genuinely has no answer there.
//!
//! The triangular d = 2 case assigns `Y_1` the index `α_1 ∧ α_2` and `Y_2`
//! the index `α_2`. When `α_2 < α_1` both transformed components carry
//! `α_2` and are dependent, so an original component mixing both is
//! `Undetermined`; a tie `α_1 = α_2` is refused outright.

use serde::Serialize;

use super::moments::solve_component_tail_index;
use super::spectral::SpectralSolution;
use super::{McEstimate, TailError};
use crate::model::ModelSpec;
use crate::structure::{StructureDecomposition, StructureKind};

/// Relative tolerance for treating two σ values as tied.
const SIGMA_TIE_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailMethod {
    SimDiag,
    SimDiagRepeated,
    Triangular2D,
    SpectralMC,
    Undetermined,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentTail {
    /// 0-based component index of X.
    pub component: usize,
    pub alpha: Option<f64>,
    pub method: TailMethod,
    /// Transformed components whose indexes are relevant for this one
    /// (the nonzero-P^{ij} set; for the repeated case, the minimizing set).
    pub relevant_set: Vec<usize>,
    pub note: Option<String>,
}

/// Tail constants attached to a report (filled by the constants estimators).
#[derive(Debug, Clone, Default, Serialize)]
pub struct TailConstants {
    pub c_plus: Option<McEstimate>,
    pub c2: Option<McEstimate>,
    pub c1_tilde: Option<f64>,
    pub w_s_series: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub per_component: Vec<ComponentTail>,
    /// σ_i of each transformed component (moment-equation scale).
    pub transformed_sigmas: Vec<f64>,
    /// α_i^(Y) of each transformed component, where a root exists.
    pub transformed_alphas: Vec<Option<f64>>,
    /// Tail balance (p, q): 1/2 each, by the joint symmetry of the
    /// Gaussian drivers.
    pub balance_p: f64,
    pub balance_q: f64,
    pub constants: Option<TailConstants>,
    pub spectral: Option<SpectralSolution>,
    pub notes: Vec<String>,
}

impl TailReport {
    fn new(d: usize) -> Self {
        Self {
            per_component: Vec::with_capacity(d),
            transformed_sigmas: Vec::new(),
            transformed_alphas: Vec::new(),
            balance_p: 0.5,
            balance_q: 0.5,
            constants: None,
            spectral: None,
            notes: Vec::new(),
        }
    }

    pub fn alpha_of(&self, component: usize) -> Option<f64> {
        self.per_component[component].alpha
    }
}

fn component_sigmas(dec: &StructureDecomposition, d: usize) -> Vec<f64> {
    let diags = dec.diagonals();
    (0..d)
        .map(|i| diags.iter().map(|v| v[i] * v[i]).sum::<f64>().sqrt())
        .collect()
}

/// Theorem-5.1/5.2 index assignment for diagonal structures.
pub fn tail_indexes_simdiag(
    spec: &ModelSpec,
    dec: &StructureDecomposition,
) -> Result<TailReport, TailError> {
    if !matches!(
        dec.kind,
        StructureKind::AlreadyDiagonal | StructureKind::SimDiagonalizable
    ) {
        return Err(TailError::NotApplicable(format!(
            "simdiag tail indexes need a diagonal structure, got {:?}",
            dec.kind
        )));
    }
    if spec.q() != 1 {
        return Err(TailError::NotApplicable(
            "diagonal tail theory applies to q = 1".into(),
        ));
    }
    let d = spec.d();
    let sigmas = component_sigmas(dec, d);
    let mut alphas: Vec<Option<f64>> = Vec::with_capacity(d);
    for &s in &sigmas {
        alphas.push(if s > 0.0 {
            solve_component_tail_index(s).ok()
        } else {
            // No random coefficient in this direction: lighter than any
            // power law, never the minimum.
            None
        });
    }

    let mut report = TailReport::new(d);
    report.transformed_sigmas = sigmas.clone();
    report.transformed_alphas = alphas.clone();

    for i in 0..d {
        let relevant: Vec<usize> = (0..d)
            .filter(|&j| dec.p_inv[(i, j)].abs() > dec.tol)
            .collect();
        debug_assert!(!relevant.is_empty());

        // Purely-noise transformed components (sigma = 0) drop out of the
        // index minimum; a missing root at sigma > 0 is a real obstruction.
        let mut no_root = None;
        let active: Vec<usize> = relevant
            .iter()
            .copied()
            .filter(|&j| sigmas[j] > 0.0)
            .collect();
        for &j in &active {
            if alphas[j].is_none() {
                no_root = Some(j);
            }
        }
        if let Some(j) = no_root {
            report.per_component.push(ComponentTail {
                component: i,
                alpha: None,
                method: TailMethod::Undetermined,
                relevant_set: relevant,
                note: Some(format!(
                    "no moment-equation root for transformed component {j} (sigma = {:.6} at or beyond the boundary)",
                    sigmas[j]
                )),
            });
            continue;
        }
        if active.is_empty() {
            report.per_component.push(ComponentTail {
                component: i,
                alpha: None,
                method: TailMethod::Undetermined,
                relevant_set: relevant,
                note: Some("component is driven by intercept noise only".into()),
            });
            continue;
        }

        let sigma_star = active.iter().map(|&j| sigmas[j]).fold(0.0, f64::max);
        let minimizers: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&j| sigmas[j] >= sigma_star * (1.0 - SIGMA_TIE_REL))
            .collect();
        let alpha = alphas[minimizers[0]];

        if minimizers.len() == 1 {
            report.per_component.push(ComponentTail {
                component: i,
                alpha,
                method: TailMethod::SimDiag,
                relevant_set: relevant,
                note: None,
            });
        } else if spec.l() == 1 {
            // Repeated minimal index: valid when the minimizing transformed
            // components share one coefficient value (they then sum to a
            // single scalar SRE with the same index).
            let diag = &dec.diagonals()[0];
            let d0 = diag[minimizers[0]];
            let same_value = minimizers
                .iter()
                .all(|&j| (diag[j] - d0).abs() <= SIGMA_TIE_REL * (1.0 + d0.abs()));
            if same_value {
                report.per_component.push(ComponentTail {
                    component: i,
                    alpha,
                    method: TailMethod::SimDiagRepeated,
                    relevant_set: minimizers,
                    note: None,
                });
            } else {
                report.per_component.push(ComponentTail {
                    component: i,
                    alpha: None,
                    method: TailMethod::Undetermined,
                    relevant_set: minimizers,
                    note: Some(
                        "minimal index repeated across components with differing coefficient values; no applicable result"
                            .into(),
                    ),
                });
            }
        } else {
            report.per_component.push(ComponentTail {
                component: i,
                alpha: None,
                method: TailMethod::Undetermined,
                relevant_set: minimizers,
                note: Some(
                    "minimal index attained by several transformed components (l > 1); no applicable result"
                        .into(),
                ),
            });
        }
    }
    Ok(report)
}

/// Theorem-6.1 index assignment for the 2-d triangular structure.
pub fn tail_indexes_triangular(
    spec: &ModelSpec,
    dec: &StructureDecomposition,
) -> Result<TailReport, TailError> {
    if dec.kind != StructureKind::SimTriangularizable2D {
        return Err(TailError::NotApplicable(format!(
            "triangular tail indexes need a 2-d triangular structure, got {:?}",
            dec.kind
        )));
    }
    if spec.q() != 1 || spec.d() != 2 {
        return Err(TailError::NotApplicable(
            "triangular tail theory applies to d = 2, q = 1".into(),
        ));
    }
    let sigmas = component_sigmas(dec, 2);
    let (s1, s2) = (sigmas[0], sigmas[1]);
    if (s1 - s2).abs() <= SIGMA_TIE_REL * s1.max(s2) {
        return Err(TailError::TieUndetermined);
    }
    let alpha1 = solve_component_tail_index(s1)?;
    let alpha2 = solve_component_tail_index(s2)?;
    // Y_1 inherits the heavier of the two; Y_2 is autonomous.
    let y_alpha = [alpha1.min(alpha2), alpha2];
    let second_dominates = alpha2 < alpha1;

    let mut report = TailReport::new(2);
    report.transformed_sigmas = sigmas;
    report.transformed_alphas = vec![Some(alpha1), Some(alpha2)];
    if second_dominates {
        report.notes.push(
            "alpha_2 < alpha_1: the first transformed component inherits index alpha_2 with forward constant c1_tilde"
                .into(),
        );
    }

    for i in 0..2 {
        let relevant: Vec<usize> = (0..2)
            .filter(|&k| dec.p_inv[(i, k)].abs() > dec.tol)
            .collect();
        if second_dominates && relevant.len() == 2 {
            report.per_component.push(ComponentTail {
                component: i,
                alpha: None,
                method: TailMethod::Undetermined,
                relevant_set: relevant,
                note: Some(
                    "dependent equal-index Y components: both transformed components carry alpha_2 and are dependent, so their combination is out of reach"
                        .into(),
                ),
            });
            continue;
        }
        let alpha = relevant
            .iter()
            .map(|&k| y_alpha[k])
            .fold(f64::INFINITY, f64::min);
        report.per_component.push(ComponentTail {
            component: i,
            alpha: Some(alpha),
            method: TailMethod::Triangular2D,
            relevant_set: relevant,
            note: None,
        });
    }
    Ok(report)
}

/// Wrap a spectral-functional root as a tail report: under multivariate
/// regular variation every component shares the same index.
pub fn tail_report_spectral(spec: &ModelSpec, solution: SpectralSolution) -> TailReport {
    let d = spec.d();
    let mut report = TailReport::new(d);
    for i in 0..d {
        report.per_component.push(ComponentTail {
            component: i,
            alpha: Some(solution.alpha),
            method: TailMethod::SpectralMC,
            relevant_set: (0..d).collect(),
            note: None,
        });
    }
    if solution.low_precision {
        report
            .notes
            .push("spectral root flagged LowPrecision (effective sample size below 100)".into());
    }
    report.spectral = Some(solution);
    report
}
