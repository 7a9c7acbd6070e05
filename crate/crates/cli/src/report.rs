//! Report assembly: one JSON document per run, every section present or
//! explicitly `{"skipped": reason}`. All numbers come from library
//! operations; nothing is computed here.

use bekk_core::assumptions::{self, AssumptionVerdict, CheckStatus};
use bekk_core::estimator::{self, ComponentTailDiagnostics};
use bekk_core::stationarity::{self, LyapunovReport, Verdict};
use bekk_core::structure::{classify, StructureKind};
use bekk_core::tail::{self, TailReport};
use bekk_core::{ModelSpec, StructureDecomposition};
use serde_json::{json, Value};

pub struct AnalyzeSettings {
    pub seed: u64,
    pub simulate: bool,
    pub check_assumptions: bool,
    pub samples: usize,
    pub replicas: usize,
}

pub struct AnalysisOutcome {
    pub report: Value,
    pub stationarity_verdict: Verdict,
    pub any_assumption_failed: bool,
    pub theory: Option<TailReport>,
    pub diagnostics: Option<Vec<ComponentTailDiagnostics>>,
    pub batch: Option<bekk_core::sim::SimBatch>,
}

fn skipped(reason: &str) -> Value {
    json!({ "skipped": reason })
}

fn matrix_rows(m: &bekk_core::nalgebra::DMatrix<f64>) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect();
    json!(rows)
}

fn structure_section(dec: &StructureDecomposition) -> Value {
    json!({
        "kind": dec.kind,
        "p": matrix_rows(&dec.p),
        "p_inv": matrix_rows(&dec.p_inv),
        "transformed": dec.transformed.iter().map(matrix_rows).collect::<Vec<_>>(),
        "residual": dec.residual,
        "tol": dec.tol,
    })
}

fn stationarity_section(spec: &ModelSpec, lyap: &LyapunovReport) -> Value {
    let kron = stationarity::kronecker_condition(spec);
    let mut section = serde_json::to_value(lyap).expect("lyapunov serializes");
    let obj = section.as_object_mut().unwrap();
    obj.insert("kronecker".into(), serde_json::to_value(&kron).unwrap());
    if spec.d() == 1 && spec.q() == 1 && spec.l() == 1 {
        let a = spec.coefficient_at(1, 1)[(0, 0)];
        obj.insert(
            "nelson".into(),
            json!({
                "bound": stationarity::nelson_bound(),
                "a_squared": a * a,
                "satisfied": a * a < stationarity::nelson_bound(),
            }),
        );
    }
    section
}

/// Theory route chosen from the structure; returns the section value plus
/// the report when one was produced.
fn tail_theory(
    spec: &ModelSpec,
    dec: &StructureDecomposition,
    lyap_verdict: Verdict,
    seed: u64,
) -> (Value, Option<TailReport>) {
    let produced = match dec.kind {
        StructureKind::AlreadyDiagonal | StructureKind::SimDiagonalizable => {
            tail::tail_indexes_simdiag(spec, dec)
        }
        StructureKind::SimTriangularizable2D => tail::tail_indexes_triangular(spec, dec),
        StructureKind::General => {
            if lyap_verdict != Verdict::Stationary {
                return (
                    skipped("general structure needs a certified stationary model for the spectral solver"),
                    None,
                );
            }
            tail::solve_spectral_tail_index(spec, 200, 512, seed)
                .map(|sol| tail::tail_report_spectral(spec, sol))
        }
    };
    let mut report = match produced {
        Ok(r) => r,
        Err(e) => return (skipped(&format!("tail theory unavailable: {e}")), None),
    };
    attach_constants(spec, dec, &mut report, seed);
    (
        serde_json::to_value(&report).expect("tail report serializes"),
        Some(report),
    )
}

/// Goldie and forward constants where the structure admits them.
fn attach_constants(
    spec: &ModelSpec,
    dec: &StructureDecomposition,
    report: &mut TailReport,
    seed: u64,
) {
    let mut constants = tail::TailConstants::default();
    let mut have = false;
    if spec.d() == 1 {
        // Scalar SRE: c+ from the Goldie formula directly.
        if let Some(alpha) = report.alpha_of(0) {
            let sigma_a = report.transformed_sigmas[0];
            let sigma_b = spec.intercept()[(0, 0)].sqrt();
            match tail::goldie_constant(
                &tail::ScalarSre { sigma_a, sigma_b },
                alpha,
                200_000,
                seed.wrapping_add(0xc0),
            ) {
                Ok(est) => {
                    constants.c_plus = Some(est);
                    have = true;
                }
                Err(e) => report.notes.push(format!("goldie constant unavailable: {e}")),
            }
        }
    }
    if dec.kind == StructureKind::SimTriangularizable2D {
        if let (Some(a1), Some(a2)) = (report.transformed_alphas[0], report.transformed_alphas[1])
        {
            if a1 > a2 {
                match tail::forward_constant_triangular(
                    spec,
                    dec,
                    a1,
                    a2,
                    30,
                    200_000,
                    seed.wrapping_add(0xf0),
                ) {
                    Ok(fc) => {
                        constants.c2 = Some(fc.c2.clone());
                        constants.c1_tilde = Some(fc.c1_tilde);
                        constants.w_s_series = fc.w_s.clone();
                        if fc.plateau_s.is_none() {
                            report
                                .notes
                                .push("w_s series has not plateaued by s_max".into());
                        }
                        report.notes.push(
                            "forward-constant moments evaluated at exponent alpha_2 (the index of the dominating term)"
                                .into(),
                        );
                        report.notes.push(
                            "c2 subtrahend uses the second component's own coefficient M22 (the Goldie template)"
                                .into(),
                        );
                        have = true;
                    }
                    Err(e) => report
                        .notes
                        .push(format!("forward constants unavailable: {e}")),
                }
            }
        }
    }
    if have {
        report.constants = Some(constants);
    }
}

fn assumptions_section(spec: &ModelSpec, seed: u64) -> (Value, bool) {
    let mut verdicts: Vec<AssumptionVerdict> = vec![
        assumptions::check_irreducibility_density(spec),
        assumptions::check_nonparallel_trajectory(spec, 64, 50, seed.wrapping_add(0xa0)),
        assumptions::check_det_nondegenerate(spec, seed.wrapping_add(0xa1)),
    ];
    let mut proximality = assumptions::check_proximality_density(spec);
    let mut search_value = Value::Null;
    if proximality.status == CheckStatus::Fails && spec.q() == 1 && spec.l() >= 2 {
        // The density route is only sufficient; a single draw with a simple
        // dominant eigenvalue certifies the contraction assumption directly.
        let search =
            assumptions::search_proximal_element(spec, 1000, seed.wrapping_add(0xa2));
        search_value = serde_json::to_value(&search).unwrap();
        if search.found {
            proximality.status = CheckStatus::Holds;
            proximality.detail = format!(
                "{}; a sampled coefficient draw with relative eigen-gap {:.3e} certifies the proximality assumption directly",
                proximality.detail, search.best_gap
            );
            proximality.witness = Some(assumptions::Witness::EigenGap(search.best_gap));
        } else {
            proximality.status = CheckStatus::Undetermined;
            proximality.detail = format!(
                "{}; the randomized proximal-element search also failed (best eigen-gap {:.3e}), which proves nothing",
                proximality.detail, search.best_gap
            );
        }
    }
    verdicts.push(proximality);
    let failed = verdicts.iter().any(|v| v.status == CheckStatus::Fails);
    let section = json!({
        "verdicts": verdicts,
        "proximal_search": search_value,
        "note": "Holds/Fails refer to the named sufficient condition; the report text states which assumption each verdict addresses",
    });
    (section, failed)
}

pub fn analyze(spec: &ModelSpec, settings: &AnalyzeSettings) -> AnalysisOutcome {
    let started = std::time::Instant::now();
    let dec = classify(spec);
    let lyap = stationarity::lyapunov_estimate(spec, 2000, 200, settings.seed);
    let verdict = lyap.verdict;

    let (theory_value, theory) = if verdict == Verdict::NonStationary {
        (
            skipped("model certified nonstationary; the stationary tail theory does not apply"),
            None,
        )
    } else {
        tail_theory(spec, &dec, verdict, settings.seed)
    };

    let mut diagnostics = None;
    let mut batch = None;
    let empirics_value = if !settings.simulate {
        skipped("--simulate not set")
    } else if verdict == Verdict::NonStationary {
        skipped("model certified nonstationary; simulation would overflow")
    } else {
        let cfg = bekk_core::sim::SimConfig {
            seed: settings.seed,
            burn_in: 10_000,
            n_samples: settings.samples,
            replicas: settings.replicas,
            thinning: 1,
        };
        let empty_theory;
        let theory_ref = match &theory {
            Some(t) => t,
            None => {
                empty_theory = no_theory(spec.d());
                &empty_theory
            }
        };
        match bekk_core::sim::simulate_ensemble(spec, &cfg) {
            Ok(b) => match estimator::diagnostics_from_batch(spec, &b, theory_ref) {
                Ok(diags) => {
                    let angular = if spec.state_dim() >= 2 {
                        match estimator::angular_histogram(&b.samples, 0.99) {
                            Ok(h) => serde_json::to_value(&h).unwrap(),
                            Err(e) => skipped(&e.to_string()),
                        }
                    } else {
                        skipped("angular histogram needs dq >= 2")
                    };
                    let value = json!({
                        "components": diags,
                        "angular": angular,
                        "sim": { "spec_hash": b.spec_hash, "config": b.config },
                    });
                    diagnostics = Some(diags);
                    batch = Some(b);
                    value
                }
                Err(e) => skipped(&format!("estimation failed: {e}")),
            },
            Err(e) => skipped(&format!("simulation failed: {e}")),
        }
    };

    let (assumptions_value, any_failed) = if settings.check_assumptions {
        assumptions_section(spec, settings.seed)
    } else {
        (skipped("--check-assumptions not set"), false)
    };

    let coefficients: Vec<Value> = (1..=spec.q())
        .flat_map(|lag| {
            (1..=spec.l()).map(move |index| {
                json!({
                    "lag": lag,
                    "index": index,
                    "matrix": matrix_rows(spec.coefficient_at(lag, index)),
                })
            })
        })
        .collect();
    let report = json!({
        "report_version": 1,
        "spec_echo": {
            "d": spec.d(), "q": spec.q(), "l": spec.l(),
            "C": matrix_rows(spec.intercept()),
            "A": coefficients,
            "hash": spec.hash(),
        },
        "structure": structure_section(&dec),
        "stationarity": stationarity_section(spec, &lyap),
        "tail_theory": theory_value,
        "tail_empirics": empirics_value,
        "assumptions": assumptions_value,
        "provenance": {
            "seed": settings.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time": started.elapsed().as_secs_f64(),
        },
    });
    AnalysisOutcome {
        report,
        stationarity_verdict: verdict,
        any_assumption_failed: any_failed,
        theory,
        diagnostics,
        batch,
    }
}

/// Placeholder theory (all components NoTheory) for simulate-only runs.
fn no_theory(d: usize) -> TailReport {
    TailReport {
        per_component: (0..d)
            .map(|component| tail::ComponentTail {
                component,
                alpha: None,
                method: tail::TailMethod::Undetermined,
                relevant_set: Vec::new(),
                note: None,
            })
            .collect(),
        transformed_sigmas: Vec::new(),
        transformed_alphas: Vec::new(),
        balance_p: 0.5,
        balance_q: 0.5,
        constants: None,
        spectral: None,
        notes: Vec::new(),
    }
}
