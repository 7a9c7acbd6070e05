//! Simulation of the companion-form SRE `V_t = M_t V_{t-1} + Q_t`.
//!
//! Two modes: a single trajectory ([`simulate_path`]) and an ensemble of
//! independent trajectories ([`simulate_ensemble`]), each burned in and each
//! contributing a share of the retained draws. The ensemble is the default
//! source for tail estimation since Hill theory degrades under serial
//! dependence; the single path stays around for diagnostics.
//!
//! Randomness follows the crate-wide contract: replica `r` draws from stream
//! `(seed, r)`, consuming `q*l` coefficient normals then `d` noise normals
//! per step, so a `(ModelSpec, SimConfig)` pair determines the output
//! bit-for-bit regardless of thread scheduling.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CompanionTemplate, ModelSpec};
use crate::rng::NormalStream;

/// Any state coordinate beyond this magnitude counts as an explosion.
pub const OVERFLOW_LIMIT: f64 = 1e300;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("state overflow at step {step} (replica {replica}): explosive regime")]
    Overflow { replica: usize, step: usize },
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Steps discarded before sampling starts (per trajectory).
    pub burn_in: usize,
    /// Total retained draws across all replicas.
    pub n_samples: usize,
    pub replicas: usize,
    /// Keep every k-th post-burn-in state.
    pub thinning: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            burn_in: 10_000,
            n_samples: 100_000,
            replicas: 256,
            thinning: 1,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        if self.burn_in < 1 || self.n_samples < 1 || self.replicas < 1 || self.thinning < 1 {
            return Err(SimError::InvalidConfig(
                "burn_in, n_samples, replicas, and thinning must all be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Retained stacked states plus provenance.
#[derive(Debug, Clone)]
pub struct SimBatch {
    /// `n_samples x dq`, one retained state per row.
    pub samples: DMatrix<f64>,
    pub spec_hash: String,
    pub config: SimConfig,
    pub wall_time: f64,
}

impl SimBatch {
    /// Column of one state coordinate (component `i` of `X_t` for i < d).
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.samples.column(i).iter().copied().collect()
    }

    /// CSV dump: header `t,v1,...,v_dq`, 17 significant digits.
    pub fn dump_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let dq = self.samples.ncols();
        write!(w, "t")?;
        for j in 1..=dq {
            write!(w, ",v{j}")?;
        }
        writeln!(w)?;
        for r in 0..self.samples.nrows() {
            write!(w, "{r}")?;
            for j in 0..dq {
                write!(w, ",{:.16e}", self.samples[(r, j)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// One draw of the random pair `(M_t, Q_t)`: `q*l` coefficient normals fill
/// the slots in canonical order, then `d` noise normals are colored by the
/// Cholesky factor of `C` into the top block of `Q_t`.
pub fn draw_coefficients<S: crate::rng::NormalSource>(
    template: &CompanionTemplate,
    source: &mut S,
) -> (DMatrix<f64>, nalgebra::DVector<f64>) {
    let coeffs: Vec<f64> = (0..template.q() * template.l())
        .map(|_| source.normal())
        .collect();
    let m = template.materialize(&coeffs);
    let d = template.d();
    let z: Vec<f64> = (0..d).map(|_| source.normal()).collect();
    let chol = template.noise_chol();
    let mut q = nalgebra::DVector::zeros(template.dim());
    for r in 0..d {
        for c in 0..=r {
            q[r] += chol[(r, c)] * z[c];
        }
    }
    (m, q)
}

/// One-trajectory stepper over the companion SRE, no per-step allocation.
pub struct CompanionStepper<'a> {
    template: &'a CompanionTemplate,
    coeffs: Vec<f64>,
    noise: Vec<f64>,
    top: Vec<f64>,
    pub state: Vec<f64>,
}

impl<'a> CompanionStepper<'a> {
    pub fn new(template: &'a CompanionTemplate) -> Self {
        Self {
            template,
            coeffs: vec![0.0; template.q() * template.l()],
            noise: vec![0.0; template.d()],
            top: vec![0.0; template.d()],
            state: vec![0.0; template.dim()],
        }
    }

    /// Advance one step, drawing `q*l + d` normals in canonical order.
    pub fn step(&mut self, stream: &mut NormalStream) {
        let d = self.template.d();
        stream.fill_normals(&mut self.coeffs);
        stream.fill_normals(&mut self.noise);

        // Top block: sum over slots of m_ij * A_ij * x_lag, plus L z.
        self.top.iter_mut().for_each(|x| *x = 0.0);
        for (m, slot) in self.coeffs.iter().zip(self.template.slots()) {
            let x = &self.state[(slot.lag - 1) * d..slot.lag * d];
            for r in 0..d {
                let mut acc = 0.0;
                for c in 0..d {
                    acc += slot.matrix[(r, c)] * x[c];
                }
                self.top[r] += m * acc;
            }
        }
        let chol = self.template.noise_chol();
        for r in 0..d {
            let mut acc = 0.0;
            for c in 0..=r {
                acc += chol[(r, c)] * self.noise[c];
            }
            self.top[r] += acc;
        }

        // Shift lag blocks down, then install the new top block.
        let dim = self.state.len();
        if dim > d {
            self.state.copy_within(0..dim - d, d);
        }
        self.state[..d].copy_from_slice(&self.top);
    }

    pub fn overflowed(&self) -> bool {
        self.state
            .iter()
            .any(|x| !x.is_finite() || x.abs() > OVERFLOW_LIMIT)
    }
}

fn run_replica(
    template: &CompanionTemplate,
    seed: u64,
    replica: usize,
    burn_in: usize,
    keep: usize,
    thinning: usize,
) -> Result<Vec<f64>, SimError> {
    let mut stream = NormalStream::new(seed, replica as u64);
    let mut stepper = CompanionStepper::new(template);
    let mut out = Vec::with_capacity(keep * template.dim());
    for step in 0..burn_in {
        stepper.step(&mut stream);
        if stepper.overflowed() {
            return Err(SimError::Overflow { replica, step });
        }
    }
    for k in 0..keep {
        for sub in 0..thinning {
            stepper.step(&mut stream);
            if stepper.overflowed() {
                return Err(SimError::Overflow {
                    replica,
                    step: burn_in + k * thinning + sub,
                });
            }
        }
        out.extend_from_slice(&stepper.state);
    }
    Ok(out)
}

fn assemble(
    spec: &ModelSpec,
    config: &SimConfig,
    rows_per_replica: Vec<usize>,
    started: std::time::Instant,
) -> Result<SimBatch, SimError> {
    let template = spec.companion_template();
    let dq = template.dim();
    let results: Vec<Result<Vec<f64>, SimError>> = rows_per_replica
        .par_iter()
        .enumerate()
        .map(|(r, &keep)| {
            run_replica(&template, config.seed, r, config.burn_in, keep, config.thinning)
        })
        .collect();
    // Failures are reported for the lowest replica index, deterministically.
    let mut chunks = Vec::with_capacity(results.len());
    for res in results {
        chunks.push(res?);
    }
    let mut samples = DMatrix::zeros(config.n_samples, dq);
    let mut row = 0;
    for chunk in &chunks {
        for state in chunk.chunks_exact(dq) {
            for (j, &v) in state.iter().enumerate() {
                samples[(row, j)] = v;
            }
            row += 1;
        }
    }
    debug_assert_eq!(row, config.n_samples);
    Ok(SimBatch {
        samples,
        spec_hash: spec.hash(),
        config: config.clone(),
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// One burned-in trajectory; retained states are consecutive (thinned) draws.
pub fn simulate_path(spec: &ModelSpec, config: &SimConfig) -> Result<SimBatch, SimError> {
    config.validate()?;
    let started = std::time::Instant::now();
    assemble(spec, config, vec![config.n_samples], started)
}

/// `replicas` independent burned-in trajectories, replica `r` on stream
/// `(seed, r)`, each contributing `n_samples / replicas` draws (the first
/// `n_samples % replicas` replicas take one extra). Output rows are ordered
/// by replica index, never by completion time.
pub fn simulate_ensemble(spec: &ModelSpec, config: &SimConfig) -> Result<SimBatch, SimError> {
    config.validate()?;
    let started = std::time::Instant::now();
    let base = config.n_samples / config.replicas;
    let extra = config.n_samples % config.replicas;
    let rows: Vec<usize> = (0..config.replicas)
        .map(|r| base + usize::from(r < extra))
        .collect();
    assemble(spec, config, rows, started)
}
