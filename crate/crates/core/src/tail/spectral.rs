//! Root of the spectral functional `Λ_n(α) = n^{-1} log E‖M_1 ⋯ M_n‖^α`.
//!
//! `Λ_n` is convex with `Λ_n(0) = 0` and initial slope near the Lyapunov
//! exponent, so for a stationary model the generalized moment condition
//! `inf_n (E‖M_1⋯M_n‖^α)^{1/n} = 1` turns into a one-dimensional root find
//! in α, approximated at the largest horizon of the schedule {n/4, n/2, n}.
//!
//! Estimating `E‖Π_n‖^α` by averaging independent products is hopeless for
//! interesting n: the summand's relative variance grows geometrically in n.
//! The estimator here keeps a population of renormalized product particles
//! and treats the per-step norm growth to the power α as a Feynman-Kac
//! potential: log-domain weights, effective-sample-size monitoring, and
//! systematic resampling when the ESS decays. The telescoped normalizer is
//! then an estimate of `log E‖Π_n‖^α` whose noise grows linearly in n rather
//! than geometrically. Draws come from per-particle streams, so an
//! evaluation is a deterministic function of (seed, α, n, particle count)
//! and the bisection sees a reproducible objective.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::TailError;
use crate::model::{CompanionTemplate, ModelSpec};
use crate::rng::NormalStream;
use crate::structure::op_norm;

/// Search bracket for α; beyond this a power tail is indistinguishable from
/// a light tail at double precision.
pub const ALPHA_MAX: f64 = 25.0;

/// Effective-sample-size floor below which an evaluation is distrusted.
const ESS_FLOOR: f64 = 100.0;

/// Stream 0 drives resampling; particles use streams 1.., so the coefficient
/// draws stay aligned across α evaluations regardless of resampling times.
const PARTICLE_STREAM_BASE: u64 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSolution {
    /// Root at the largest horizon.
    pub alpha: f64,
    /// (horizon, root) pairs, small to large; convergence diagnostic for the
    /// inf over n.
    pub roots_by_horizon: Vec<(usize, f64)>,
    /// Set when the final evaluation's ESS stayed below the floor even after
    /// the particle budget was raised.
    pub low_precision: bool,
    pub particles_used: usize,
}

struct Particle {
    state: DMatrix<f64>,
    matrix: DMatrix<f64>,
    next: DMatrix<f64>,
    coeffs: Vec<f64>,
    stream: NormalStream,
    log_weight: f64,
}

struct Evaluation {
    lambda: f64,
    min_ess: f64,
}

use super::smc::{ess, log_sum_exp, systematic_resample};

fn evaluate(
    template: &CompanionTemplate,
    alpha: f64,
    n: usize,
    n_particles: usize,
    seed: u64,
) -> Evaluation {
    let dim = template.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    let root_dim = (dim as f64).sqrt();
    let mut particles: Vec<Particle> = (0..n_particles)
        .map(|p| Particle {
            state: &id / root_dim,
            matrix: DMatrix::zeros(dim, dim),
            next: DMatrix::zeros(dim, dim),
            coeffs: vec![0.0; template.q() * template.l()],
            stream: NormalStream::new(seed, PARTICLE_STREAM_BASE + p as u64),
            log_weight: 0.0,
        })
        .collect();
    let mut resample_stream = NormalStream::new(seed, 0);
    let mut log_z = 0.0;
    let mut min_ess = f64::INFINITY;

    for t in 1..=n {
        let last = t == n;
        particles.par_iter_mut().for_each(|p| {
            p.stream.fill_normals(&mut p.coeffs);
            template.materialize_into(&p.coeffs, &mut p.matrix);
            p.next.gemm(1.0, &p.matrix, &p.state, 0.0);
            let growth = p.next.norm();
            p.next /= growth;
            std::mem::swap(&mut p.state, &mut p.next);
            p.log_weight += alpha * growth.ln();
            if last {
                // Convert the Frobenius-normalized telescoping back to the
                // operator norm of the full product.
                p.log_weight += alpha * op_norm(&p.state).ln();
            }
        });
        let lws: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
        let current_ess = ess(&lws);
        min_ess = min_ess.min(current_ess);
        if !last && current_ess < n_particles as f64 / 2.0 {
            log_z += log_sum_exp(&lws) - (n_particles as f64).ln();
            let indices = systematic_resample(&lws, n_particles, &mut resample_stream);
            let states: Vec<DMatrix<f64>> =
                indices.iter().map(|&i| particles[i].state.clone()).collect();
            for (p, s) in particles.iter_mut().zip(states) {
                p.state = s;
                p.log_weight = 0.0;
            }
        }
    }
    let lws: Vec<f64> = particles.iter().map(|p| p.log_weight).collect();
    log_z += log_sum_exp(&lws) - (n_particles as f64).ln();
    // The initial state I/sqrt(dim) scales ||Pi_n|| down by sqrt(dim).
    log_z += alpha * root_dim.ln();
    Evaluation {
        lambda: log_z / n as f64,
        min_ess,
    }
}

struct RootFinder<'a> {
    template: &'a CompanionTemplate,
    seed: u64,
    particles: usize,
    particle_cap: usize,
    bracket_growth: f64,
    low_precision: bool,
}

impl<'a> RootFinder<'a> {
    fn eval(&mut self, alpha: f64, n: usize) -> f64 {
        let e = evaluate(self.template, alpha, n, self.particles, self.seed);
        if e.min_ess < ESS_FLOOR {
            // Variance guard: grow the bracket more cautiously and spend
            // more particles from here on.
            self.bracket_growth = 1.5;
            if self.particles < self.particle_cap {
                self.particles = (self.particles * 2).min(self.particle_cap);
            }
        }
        e.lambda
    }

    fn root(&mut self, n: usize) -> Result<f64, TailError> {
        let mut lo;
        let mut hi;
        let first = self.eval(1.0, n);
        if first > 0.0 {
            hi = 1.0;
            lo = 0.5;
            while self.eval(lo, n) > 0.0 && lo > 1e-6 {
                lo /= 2.0;
            }
        } else {
            lo = 1.0;
            hi = lo * self.bracket_growth;
            loop {
                if hi >= ALPHA_MAX {
                    hi = ALPHA_MAX;
                    if self.eval(hi, n) <= 0.0 {
                        return Err(TailError::NoSignChange(ALPHA_MAX));
                    }
                    break;
                }
                if self.eval(hi, n) > 0.0 {
                    break;
                }
                lo = hi;
                hi *= self.bracket_growth;
            }
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid, n) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-3 * hi.max(1.0) {
                break;
            }
        }
        let root = 0.5 * (lo + hi);
        // The flag describes the returned estimate, not the bracketing
        // excursions (an exhausted ESS at alpha = 25 is expected and fine).
        let final_eval = evaluate(self.template, root, n, self.particles, self.seed);
        self.low_precision = final_eval.min_ess < ESS_FLOOR;
        Ok(root)
    }
}

/// Solve `Λ_n(α) = 0` on the horizon schedule and report the largest-n root.
///
/// `replicas` is the initial particle count (the guard may grow it up to
/// 8x). The caller is responsible for having established stationarity; on a
/// non-stationary model the functional typically has no positive root and
/// the search ends in `NoSignChange`.
pub fn solve_spectral_tail_index(
    spec: &ModelSpec,
    n_horizon: usize,
    replicas: usize,
    seed: u64,
) -> Result<SpectralSolution, TailError> {
    assert!(n_horizon >= 4 && replicas >= 8);
    let template = spec.companion_template();
    let horizons = [
        (n_horizon / 4).max(2),
        (n_horizon / 2).max(3),
        n_horizon,
    ];
    let mut finder = RootFinder {
        template: &template,
        seed,
        particles: replicas,
        particle_cap: replicas * 8,
        bracket_growth: 2.0,
        low_precision: false,
    };
    let mut roots = Vec::with_capacity(horizons.len());
    for &n in &horizons {
        let root = finder.root(n)?;
        roots.push((n, root));
    }
    Ok(SpectralSolution {
        alpha: roots.last().unwrap().1,
        roots_by_horizon: roots,
        low_precision: finder.low_precision,
        particles_used: finder.particles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tail::solve_component_tail_index;

    #[test]
    fn scalar_unit_coefficient_root_is_two() {
        // For d = q = l = 1, Λ_n(α) = log E|a z|^α at every n; a = 1 has the
        // exact root 2 (the closed-form oracle).
        let spec = ModelSpec::scalar(1.0, 1.0).unwrap();
        let sol = solve_spectral_tail_index(&spec, 200, 512, 41).unwrap();
        assert!(
            (sol.alpha - 2.0).abs() < 0.1,
            "alpha = {} (roots {:?})",
            sol.alpha,
            sol.roots_by_horizon
        );
        for (_, r) in &sol.roots_by_horizon {
            assert!((r - 2.0).abs() < 0.2, "per-horizon roots {:?}", sol.roots_by_horizon);
        }
    }

    #[test]
    fn diagonal_root_tracks_dominant_component() {
        // ||Π|| of a shared-draw diagonal product is driven by the largest
        // |entry|, so the root matches the closed form at sigma = 1.2.
        let spec = ModelSpec::diagonal(&[0.5, 1.2]).unwrap();
        let oracle = solve_component_tail_index(1.2).unwrap();
        let sol = solve_spectral_tail_index(&spec, 200, 512, 43).unwrap();
        assert!(
            (sol.alpha - oracle).abs() / oracle < 0.1,
            "alpha = {} vs oracle {oracle}",
            sol.alpha
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = ModelSpec::scalar(1.0, 1.0).unwrap();
        let a = solve_spectral_tail_index(&spec, 40, 64, 7).unwrap();
        let b = solve_spectral_tail_index(&spec, 40, 64, 7).unwrap();
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.roots_by_horizon, b.roots_by_horizon);
    }

    #[test]
    fn nonstationary_model_has_no_sign_change_or_tiny_root_rejected() {
        // a^2 = 4: Λ_n(α) > 0 for all α > 0 (slope at zero is positive), so
        // bracketing from above finds no usable bracket; the search walks lo
        // down to the floor and returns an α near zero, or reports
        // NoSignChange. Either way it must not report a real root.
        let spec = ModelSpec::scalar(2.0, 1.0).unwrap();
        match solve_spectral_tail_index(&spec, 60, 64, 11) {
            Err(TailError::NoSignChange(_)) => {}
            Ok(sol) => assert!(sol.alpha < 2e-3, "alpha = {}", sol.alpha),
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }
}
