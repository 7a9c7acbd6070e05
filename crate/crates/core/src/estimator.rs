//! Empirical tail estimation and theory-vs-data verdicts.
//!
//! The Hill estimator on the k largest absolute values,
//! `alpha_hat = k / Σ_{i<=k} log(x_(i) / x_(k+1))`, with the usual
//! normal-approximation band `1.96 alpha_hat / sqrt(k)`. k defaults to
//! `floor(1.5 n^0.55)` — a fixed-exponent rule keeps runs deterministic; the
//! full hill curve is emitted so a human can judge threshold stability.
//! Tail balance is estimated at the Hill threshold, and survival points on a
//! log-log grid back the slope cross-check.

use serde::Serialize;
use thiserror::Error;

use crate::model::ModelSpec;
use crate::sim::{simulate_ensemble, SimBatch, SimConfig, SimError};
use crate::tail::TailReport;

/// Relative widening applied to the Hill confidence band before comparing
/// with theory: Hill bias under SRE dependence plus finite-sample bias.
pub const MODEL_TOLERANCE: f64 = 0.15;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Serialize)]
pub struct HillEstimate {
    pub alpha_hat: f64,
    pub k: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Hill estimate over the k largest order statistics of |sample|.
pub fn hill_estimator(sample: &[f64], k: usize) -> Result<HillEstimate, EstimatorError> {
    if k < 5 {
        return Err(EstimatorError::InsufficientData(format!(
            "k = {k} is below the minimum of 5"
        )));
    }
    let mut abs: Vec<f64> = sample.iter().map(|x| x.abs()).filter(|x| *x > 0.0).collect();
    if abs.len() < k + 1 {
        return Err(EstimatorError::InsufficientData(format!(
            "need at least k+1 = {} strictly positive entries, have {}",
            k + 1,
            abs.len()
        )));
    }
    // Top k+1 entries in descending order; selection keeps this O(n).
    let split = abs.len() - (k + 1);
    abs.select_nth_unstable_by(split, |a, b| a.partial_cmp(b).unwrap());
    let mut top: Vec<f64> = abs.split_off(split);
    top.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let threshold = top[k];
    let sum_log: f64 = top[..k].iter().map(|x| (x / threshold).ln()).sum();
    if sum_log <= 0.0 {
        return Err(EstimatorError::InsufficientData(
            "zero log-spacings in the tail (constant sample?)".into(),
        ));
    }
    let alpha_hat = k as f64 / sum_log;
    let half_width = 1.96 * alpha_hat / (k as f64).sqrt();
    Ok(HillEstimate {
        alpha_hat,
        k,
        ci_low: alpha_hat - half_width,
        ci_high: alpha_hat + half_width,
        n: sample.len(),
    })
}

/// Default order-statistics count: `floor(1.5 n^0.55)`.
pub fn default_hill_k(n: usize) -> usize {
    (1.5 * (n as f64).powf(0.55)).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailVerdict {
    Consistent,
    Inconsistent,
    NoTheory,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentTailDiagnostics {
    pub component: usize,
    pub hill: HillEstimate,
    /// (k, alpha_hat) over a 20-point threshold grid.
    pub hill_curve: Vec<(usize, f64)>,
    /// (log x, log empirical P(|X_i| > x)) at 30 log-spaced thresholds.
    pub survival_points: Vec<(f64, f64)>,
    /// Share of upper-tail exceedances at the Hill threshold (p-hat).
    pub balance_p_hat: f64,
    pub theory_alpha: Option<f64>,
    pub verdict: TailVerdict,
}

fn component_diagnostics(
    component: usize,
    data: &[f64],
    theory_alpha: Option<f64>,
) -> Result<ComponentTailDiagnostics, EstimatorError> {
    let n = data.len();
    let hill = hill_estimator(data, default_hill_k(n).clamp(5, n / 2))?;

    let mut curve = Vec::with_capacity(20);
    let k_lo = (hill.k / 8).max(10) as f64;
    let k_hi = ((n / 10).max(hill.k * 2)) as f64;
    for i in 0..20 {
        let k = (k_lo * (k_hi / k_lo).powf(i as f64 / 19.0)).round() as usize;
        if let Ok(est) = hill_estimator(data, k.max(5)) {
            curve.push((est.k, est.alpha_hat));
        }
    }

    let mut abs: Vec<f64> = data.iter().map(|x| x.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = abs[n - 1 - hill.k];
    let upper = data.iter().filter(|&&x| x > threshold).count() as f64;
    let two_sided = data.iter().filter(|&&x| x.abs() > threshold).count() as f64;
    let balance_p_hat = upper / two_sided;

    let mut survival_points = Vec::with_capacity(30);
    let x_lo = abs[n / 2].max(1e-12);
    let x_hi = abs[n - 20.min(n - 1)];
    if x_hi > x_lo {
        for i in 0..30 {
            let x = x_lo * (x_hi / x_lo).powf(i as f64 / 29.0);
            let exceed = abs.partition_point(|&v| v <= x);
            let sf = (n - exceed) as f64 / n as f64;
            if sf > 0.0 {
                survival_points.push((x.ln(), sf.ln()));
            }
        }
    }

    let verdict = match theory_alpha {
        None => TailVerdict::NoTheory,
        Some(a) => {
            let lo = hill.ci_low * (1.0 - MODEL_TOLERANCE);
            let hi = hill.ci_high * (1.0 + MODEL_TOLERANCE);
            if a >= lo && a <= hi {
                TailVerdict::Consistent
            } else {
                TailVerdict::Inconsistent
            }
        }
    };
    Ok(ComponentTailDiagnostics {
        component,
        hill,
        hill_curve: curve,
        survival_points,
        balance_p_hat,
        theory_alpha,
        verdict,
    })
}

/// Simulate an ensemble and confront each original component's tail with the
/// theoretical index.
pub fn component_tail_report(
    spec: &ModelSpec,
    sim: &SimConfig,
    theory: &TailReport,
) -> Result<Vec<ComponentTailDiagnostics>, EstimatorError> {
    let batch = simulate_ensemble(spec, sim)?;
    diagnostics_from_batch(spec, &batch, theory)
}

/// Same, on an already-simulated batch.
pub fn diagnostics_from_batch(
    spec: &ModelSpec,
    batch: &SimBatch,
    theory: &TailReport,
) -> Result<Vec<ComponentTailDiagnostics>, EstimatorError> {
    (0..spec.d())
        .map(|i| {
            let data = batch.coordinate(i);
            component_diagnostics(i, &data, theory.alpha_of(i))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AngularHistogram {
    /// Normalized mass per bin; sums to 1.
    pub masses: Vec<f64>,
    /// Human-readable bin labels (sector ranges for dq = 2, signed faces
    /// otherwise).
    pub labels: Vec<String>,
    pub exceedances: usize,
    pub threshold: f64,
}

/// Empirical angular distribution of `V/|V|` above a norm quantile.
///
/// 36 equal sectors for dq = 2; for dq > 2, one bin per signed coordinate
/// face (the direction of the largest |coordinate|).
pub fn angular_histogram(
    samples: &nalgebra::DMatrix<f64>,
    threshold_quantile: f64,
) -> Result<AngularHistogram, EstimatorError> {
    let dq = samples.ncols();
    if dq < 2 {
        return Err(EstimatorError::InsufficientData(
            "angular histogram needs dq >= 2".into(),
        ));
    }
    assert!((0.0..1.0).contains(&threshold_quantile));
    let n = samples.nrows();
    let mut norms: Vec<f64> = (0..n).map(|r| samples.row(r).norm()).collect();
    let mut sorted = norms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = sorted[((threshold_quantile * n as f64) as usize).min(n - 1)];

    let (bins, labels): (usize, Vec<String>) = if dq == 2 {
        let labels = (0..36)
            .map(|i| format!("[{}deg,{}deg)", i * 10, (i + 1) * 10))
            .collect();
        (36, labels)
    } else {
        let mut labels = Vec::with_capacity(2 * dq);
        for i in 0..dq {
            labels.push(format!("+e{}", i + 1));
            labels.push(format!("-e{}", i + 1));
        }
        (2 * dq, labels)
    };
    let mut counts = vec![0usize; bins];
    let mut exceedances = 0;
    for r in 0..n {
        if norms[r] <= threshold || norms[r] == 0.0 {
            continue;
        }
        exceedances += 1;
        let row = samples.row(r);
        if dq == 2 {
            let angle = row[1].atan2(row[0]);
            let frac = (angle + std::f64::consts::PI) / (2.0 * std::f64::consts::PI);
            let bin = ((frac * 36.0) as usize).min(35);
            counts[bin] += 1;
        } else {
            let (mut best, mut best_abs) = (0, 0.0);
            for j in 0..dq {
                if row[j].abs() > best_abs {
                    best_abs = row[j].abs();
                    best = j;
                }
            }
            let bin = 2 * best + usize::from(row[best] < 0.0);
            counts[bin] += 1;
        }
    }
    if exceedances < 200 {
        return Err(EstimatorError::InsufficientData(format!(
            "only {exceedances} exceedances above the {threshold_quantile} quantile (need 200)"
        )));
    }
    norms.clear();
    let masses = counts
        .iter()
        .map(|&c| c as f64 / exceedances as f64)
        .collect();
    Ok(AngularHistogram {
        masses,
        labels,
        exceedances,
        threshold,
    })
}

/// CSV emitters for external plotting: `hill_curve.csv` and `survival.csv`.
pub fn dump_diagnostics_csv(
    diagnostics: &[ComponentTailDiagnostics],
    dir: &std::path::Path,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut hill = std::fs::File::create(dir.join("hill_curve.csv"))?;
    writeln!(hill, "component,k,alpha_hat")?;
    for d in diagnostics {
        for (k, a) in &d.hill_curve {
            writeln!(hill, "{},{k},{a:.16e}", d.component)?;
        }
    }
    let mut surv = std::fs::File::create(dir.join("survival.csv"))?;
    writeln!(surv, "component,log_x,log_sf")?;
    for d in diagnostics {
        for (lx, ls) in &d.survival_points {
            writeln!(surv, "{},{lx:.16e},{ls:.16e}", d.component)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;

    /// Exact Pareto oracle: X = U^{-1/alpha} has tail index alpha and Hill
    /// is its MLE.
    fn pareto_sample(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut s = NormalStream::new(seed, 0);
        (0..n).map(|_| s.next_uniform().powf(-1.0 / alpha)).collect()
    }

    #[test]
    fn hill_unbiased_on_pareto() {
        let sample = pareto_sample(2.0, 100_000, 1);
        let est = hill_estimator(&sample, 1000).unwrap();
        // 2-sigma band for the MLE: 2 * alpha / sqrt(k) = 0.13.
        assert!(
            (est.alpha_hat - 2.0).abs() < 0.13,
            "alpha_hat = {}",
            est.alpha_hat
        );
        assert!(est.ci_low < est.alpha_hat && est.alpha_hat < est.ci_high);
    }

    #[test]
    fn hill_unbiased_across_alphas() {
        for (i, alpha) in [0.5, 1.0, 2.0, 4.0].into_iter().enumerate() {
            let sample = pareto_sample(alpha, 50_000, 10 + i as u64);
            let est = hill_estimator(&sample, 800).unwrap();
            let two_sigma = 2.0 * alpha / (800f64).sqrt();
            assert!(
                (est.alpha_hat - alpha).abs() < two_sigma,
                "alpha {alpha}: got {}",
                est.alpha_hat
            );
        }
    }

    #[test]
    fn light_tails_drift_upward_along_the_curve() {
        // Exponential sample: all moments finite; the hill curve keeps
        // climbing as k shrinks instead of stabilizing.
        let mut s = NormalStream::new(3, 0);
        let sample: Vec<f64> = (0..200_000).map(|_| -s.next_uniform().ln()).collect();
        let wide = hill_estimator(&sample, 20_000).unwrap();
        let narrow = hill_estimator(&sample, 500).unwrap();
        assert!(
            narrow.alpha_hat > wide.alpha_hat * 1.3,
            "narrow {} vs wide {}",
            narrow.alpha_hat,
            wide.alpha_hat
        );
    }

    #[test]
    fn constant_sample_is_rejected() {
        let sample = vec![3.25; 10_000];
        match hill_estimator(&sample, 100) {
            Err(EstimatorError::InsufficientData(msg)) => {
                assert!(msg.contains("log-spacings"), "{msg}")
            }
            other => panic!("expected InsufficientData, got {other:?}"),
        }
    }

    #[test]
    fn too_few_positive_entries_rejected() {
        let sample = vec![0.0; 1000];
        assert!(matches!(
            hill_estimator(&sample, 10),
            Err(EstimatorError::InsufficientData(_))
        ));
    }

    #[test]
    fn survival_slope_tracks_hill_on_pareto() {
        let sample = pareto_sample(1.5, 200_000, 7);
        let diag = component_diagnostics(0, &sample, Some(1.5)).unwrap();
        assert_eq!(diag.verdict, TailVerdict::Consistent);
        // Least-squares slope over the top decade of thresholds.
        let top: Vec<(f64, f64)> = diag
            .survival_points
            .iter()
            .copied()
            .filter(|(lx, _)| *lx > diag.survival_points.last().unwrap().0 - std::f64::consts::LN_10)
            .collect();
        let m = top.len() as f64;
        let sx: f64 = top.iter().map(|p| p.0).sum();
        let sy: f64 = top.iter().map(|p| p.1).sum();
        let sxx: f64 = top.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = top.iter().map(|p| p.0 * p.1).sum();
        let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        assert!(
            (slope + diag.hill.alpha_hat).abs() < 0.25 * diag.hill.alpha_hat,
            "slope {slope} vs -alpha_hat {}",
            -diag.hill.alpha_hat
        );
    }

    #[test]
    fn angular_histogram_uniform_for_isotropic_gaussian() {
        let mut s = NormalStream::new(5, 0);
        let n = 50_000;
        let samples = nalgebra::DMatrix::from_fn(n, 2, |_, _| s.next_normal());
        let hist = angular_histogram(&samples, 0.9).unwrap();
        assert_eq!(hist.masses.len(), 36);
        let total: f64 = hist.masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        // Isotropy: every sector near 1/36, generous multinomial band.
        for (i, &m) in hist.masses.iter().enumerate() {
            assert!(
                (m - 1.0 / 36.0).abs() < 0.012,
                "sector {i} mass {m} too far from uniform"
            );
        }
    }

    #[test]
    fn angular_histogram_concentrates_on_heavy_axis() {
        // diag(0.6, 1.2): the second coordinate has the much heavier tail,
        // so large states point near +-e2.
        let spec = crate::ModelSpec::diagonal(&[0.6, 1.2]).unwrap();
        let cfg = crate::sim::SimConfig {
            seed: 21,
            burn_in: 5_000,
            n_samples: 200_000,
            replicas: 64,
            thinning: 1,
        };
        let batch = crate::sim::simulate_ensemble(&spec, &cfg).unwrap();
        let hist = angular_histogram(&batch.samples, 0.995).unwrap();
        // Sectors covering the e2 axis: angle around +-pi/2, i.e. bins
        // near indices 27 (up) and 9 (down) of the 36-sector wheel.
        let near_axis: f64 = hist
            .masses
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let center = (*i as f64 + 0.5) * 10.0 - 180.0;
                (center.abs() - 90.0).abs() < 25.0
            })
            .map(|(_, &m)| m)
            .sum();
        assert!(
            near_axis > 0.8,
            "mass near the heavy axis is only {near_axis} ({:?})",
            hist.masses
        );
        let total: f64 = hist.masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn angular_histogram_needs_exceedances() {
        let samples = nalgebra::DMatrix::from_element(300, 2, 1.0);
        assert!(matches!(
            angular_histogram(&samples, 0.99),
            Err(EstimatorError::InsufficientData(_))
        ));
    }
}
