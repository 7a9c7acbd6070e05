//! Model specification, validation, and the companion-form SRE template.
//!
//! A validated [`ModelSpec`] holds the dimension `d`, ARCH order `q`, the
//! number of coefficient matrices per lag `l`, a symmetric positive definite
//! intercept covariance `C`, and the `q*l` coefficient matrices `A_ij`.
//! [`CompanionTemplate`] is the deterministic skeleton of the random companion
//! matrix: substituting i.i.d. standard normal draws into its slots yields a
//! draw of `M_t`, and one `N(0, C)` draw fills the top block of `Q_t`.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("intercept covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("all coefficient matrices are zero")]
    AllZeroCoefficients,
    #[error("config error: {0}")]
    Config(String),
}

/// Validated BEKK-ARCH(q, 0, l) parameterization.
///
/// Construction canonicalizes the intercept covariance to `(C + C')/2` before
/// the Cholesky positive-definiteness test and stores its lower factor.
/// Coefficients are kept in canonical slot order: lag-major, index-minor
/// (`A_11, A_12, ..., A_1l, A_21, ...`), which fixes how random draws map to
/// slots across platforms.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    d: usize,
    q: usize,
    l: usize,
    intercept: DMatrix<f64>,
    intercept_chol: DMatrix<f64>,
    coefficients: Vec<DMatrix<f64>>,
}

impl ModelSpec {
    pub fn new(
        d: usize,
        q: usize,
        l: usize,
        intercept: DMatrix<f64>,
        coefficients: Vec<DMatrix<f64>>,
    ) -> Result<Self, ModelError> {
        if d == 0 || q == 0 || l == 0 {
            return Err(ModelError::ShapeMismatch(
                "d, q, and l must all be positive".into(),
            ));
        }
        if intercept.nrows() != d || intercept.ncols() != d {
            return Err(ModelError::ShapeMismatch(format!(
                "C must be {d}x{d}, got {}x{}",
                intercept.nrows(),
                intercept.ncols()
            )));
        }
        if coefficients.len() != q * l {
            return Err(ModelError::ShapeMismatch(format!(
                "expected q*l = {} coefficient matrices, got {}",
                q * l,
                coefficients.len()
            )));
        }
        for (k, a) in coefficients.iter().enumerate() {
            if a.nrows() != d || a.ncols() != d {
                return Err(ModelError::ShapeMismatch(format!(
                    "A (slot {k}) must be {d}x{d}, got {}x{}",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        if coefficients.iter().all(|a| a.iter().all(|&x| x == 0.0)) {
            return Err(ModelError::AllZeroCoefficients);
        }
        let symmetrized = (&intercept + intercept.transpose()) * 0.5;
        let chol = Cholesky::new(symmetrized.clone()).ok_or(ModelError::NotPositiveDefinite)?;
        Ok(Self {
            d,
            q,
            l,
            intercept: symmetrized,
            intercept_chol: chol.l(),
            coefficients,
        })
    }

    /// Scalar ARCH(1): `X_t = (c + a^2 X_{t-1}^2)^{1/2} Z_t` as a d=q=l=1 spec.
    pub fn scalar(a: f64, c: f64) -> Result<Self, ModelError> {
        Self::new(
            1,
            1,
            1,
            DMatrix::from_element(1, 1, c),
            vec![DMatrix::from_element(1, 1, a)],
        )
    }

    /// q=1, l=1 spec with a diagonal coefficient matrix and identity intercept.
    pub fn diagonal(entries: &[f64]) -> Result<Self, ModelError> {
        let d = entries.len();
        Self::new(
            d,
            1,
            1,
            DMatrix::identity(d, d),
            vec![DMatrix::from_diagonal(&DVector::from_row_slice(entries))],
        )
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Companion dimension `d*q`.
    pub fn state_dim(&self) -> usize {
        self.d * self.q
    }

    /// Symmetrized intercept covariance `C`.
    pub fn intercept(&self) -> &DMatrix<f64> {
        &self.intercept
    }

    /// Lower Cholesky factor of `C`.
    pub fn intercept_chol(&self) -> &DMatrix<f64> {
        &self.intercept_chol
    }

    /// Coefficients in canonical slot order (lag-major, index-minor).
    pub fn coefficients(&self) -> &[DMatrix<f64>] {
        &self.coefficients
    }

    /// Coefficient `A_ij` for 1-based `lag` in `1..=q` and `index` in `1..=l`.
    pub fn coefficient_at(&self, lag: usize, index: usize) -> &DMatrix<f64> {
        assert!(
            (1..=self.q).contains(&lag) && (1..=self.l).contains(&index),
            "coefficient_at({lag}, {index}) out of range for q={}, l={}",
            self.q,
            self.l
        );
        &self.coefficients[(lag - 1) * self.l + (index - 1)]
    }

    /// Coefficients of one 1-based lag, in index order.
    pub fn lag_coefficients(&self, lag: usize) -> &[DMatrix<f64>] {
        assert!((1..=self.q).contains(&lag));
        &self.coefficients[(lag - 1) * self.l..lag * self.l]
    }

    /// Spec with every coefficient scaled by `s` (same intercept).
    pub fn scaled(&self, s: f64) -> Result<Self, ModelError> {
        Self::new(
            self.d,
            self.q,
            self.l,
            self.intercept.clone(),
            self.coefficients.iter().map(|a| a * s).collect(),
        )
    }

    /// SHA-256 digest of the canonical byte encoding of the spec.
    ///
    /// Dimensions as little-endian u64, then the raw f64 bits of `C` and of
    /// each coefficient in canonical order, row-major.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for dim in [self.d, self.q, self.l] {
            h.update((dim as u64).to_le_bytes());
        }
        let push_matrix = |m: &DMatrix<f64>, h: &mut Sha256| {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    h.update(m[(r, c)].to_bits().to_le_bytes());
                }
            }
        };
        push_matrix(&self.intercept, &mut h);
        for a in &self.coefficients {
            push_matrix(a, &mut h);
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parse and validate a model config from its JSON text.
    pub fn from_config_str(text: &str) -> Result<Self, ModelError> {
        let cfg: ConfigFile =
            serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        cfg.into_spec()
    }

    pub fn from_config_path(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Config(format!("{}: {e}", path.display())))?;
        Self::from_config_str(&text)
    }

    /// One-step conditional covariance `H = C + Σ_ij (A_ij x_i)(A_ij x_i)'`
    /// given the stacked state `(x_{t-1}', ..., x_{t-q}')'` of length `d*q`.
    pub fn one_step_covariance(&self, state: &[f64]) -> Result<DMatrix<f64>, ModelError> {
        if state.len() != self.state_dim() {
            return Err(ModelError::ShapeMismatch(format!(
                "state must have length d*q = {}, got {}",
                self.state_dim(),
                state.len()
            )));
        }
        let mut h = self.intercept.clone();
        for lag in 1..=self.q {
            let x = DVector::from_row_slice(&state[(lag - 1) * self.d..lag * self.d]);
            for a in self.lag_coefficients(lag) {
                let ax = a * &x;
                h.ger(1.0, &ax, &ax, 1.0);
            }
        }
        Ok(h)
    }

    pub fn companion_template(&self) -> CompanionTemplate {
        CompanionTemplate::new(self)
    }
}

/// One random slot of the companion matrix: coefficient `A_ij` placed in the
/// top block row at block column `lag`.
#[derive(Debug, Clone)]
pub struct Slot {
    /// 1-based lag `i`.
    pub lag: usize,
    /// 1-based index `j` within the lag.
    pub index: usize,
    /// The coefficient `A_ij` itself (d x d).
    pub matrix: DMatrix<f64>,
}

/// Deterministic skeleton of the random companion matrix `M_t` plus the
/// embedding of the intercept noise `Q_t`.
///
/// `M_t = deterministic_part + Σ_k m_k * placement(slot_k)` with `m_k` i.i.d.
/// standard normal in canonical slot order; `Q_t` has `L z` (with `C = L L'`,
/// `z ~ N(0, I_d)`) in its top `d` entries and zeros below.
#[derive(Debug, Clone)]
pub struct CompanionTemplate {
    d: usize,
    q: usize,
    l: usize,
    deterministic: DMatrix<f64>,
    slots: Vec<Slot>,
    noise_chol: DMatrix<f64>,
}

impl CompanionTemplate {
    fn new(spec: &ModelSpec) -> Self {
        let (d, q, l) = (spec.d, spec.q, spec.l);
        let dim = d * q;
        let mut deterministic = DMatrix::zeros(dim, dim);
        // Identity blocks on the first subdiagonal block row; for q = 1 the
        // companion form collapses to M_t itself and there are none.
        for block in 1..q {
            for r in 0..d {
                deterministic[(block * d + r, (block - 1) * d + r)] = 1.0;
            }
        }
        let mut slots = Vec::with_capacity(q * l);
        for lag in 1..=q {
            for index in 1..=l {
                slots.push(Slot {
                    lag,
                    index,
                    matrix: spec.coefficient_at(lag, index).clone(),
                });
            }
        }
        Self {
            d,
            q,
            l,
            deterministic,
            slots,
            noise_chol: spec.intercept_chol.clone(),
        }
    }

    /// Companion dimension `d*q`.
    pub fn dim(&self) -> usize {
        self.d * self.q
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn deterministic_part(&self) -> &DMatrix<f64> {
        &self.deterministic
    }

    /// Random slots in canonical order (lag-major, index-minor).
    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Number of standard normal variates one draw of `(M_t, Q_t)` consumes.
    pub fn normals_per_step(&self) -> usize {
        self.q * self.l + self.d
    }

    /// Full `dq x dq` placement matrix of one slot (mostly zeros).
    pub fn placement_matrix(&self, slot: usize) -> DMatrix<f64> {
        let dim = self.dim();
        let s = &self.slots[slot];
        let mut m = DMatrix::zeros(dim, dim);
        let col0 = (s.lag - 1) * self.d;
        for r in 0..self.d {
            for c in 0..self.d {
                m[(r, col0 + c)] = s.matrix[(r, c)];
            }
        }
        m
    }

    /// Materialize `M_t` from one coefficient draw per slot.
    pub fn materialize(&self, coeffs: &[f64]) -> DMatrix<f64> {
        let mut m = self.deterministic.clone();
        self.materialize_into(coeffs, &mut m);
        m
    }

    /// Same as [`materialize`](Self::materialize) into a caller-owned buffer.
    pub fn materialize_into(&self, coeffs: &[f64], out: &mut DMatrix<f64>) {
        assert_eq!(coeffs.len(), self.slots.len());
        out.copy_from(&self.deterministic);
        for (m, s) in coeffs.iter().zip(&self.slots) {
            let col0 = (s.lag - 1) * self.d;
            for c in 0..self.d {
                for r in 0..self.d {
                    out[(r, col0 + c)] += m * s.matrix[(r, c)];
                }
            }
        }
    }

    /// Lower Cholesky factor used to color the intercept noise.
    pub fn noise_chol(&self) -> &DMatrix<f64> {
        &self.noise_chol
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    d: usize,
    q: usize,
    l: usize,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    a: Vec<ConfigCoefficient>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigCoefficient {
    lag: usize,
    index: usize,
    matrix: Vec<Vec<f64>>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ModelError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(ModelError::Config(format!("{what} must be square and nonempty")));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

impl ConfigFile {
    fn into_spec(self) -> Result<ModelSpec, ModelError> {
        let c = matrix_from_rows(&self.c, "C")?;
        if self.a.len() != self.q * self.l {
            return Err(ModelError::Config(format!(
                "A must list exactly q*l = {} entries, got {}",
                self.q * self.l,
                self.a.len()
            )));
        }
        let mut coeffs: Vec<Option<DMatrix<f64>>> = vec![None; self.q * self.l];
        for entry in &self.a {
            if !(1..=self.q).contains(&entry.lag) || !(1..=self.l).contains(&entry.index) {
                return Err(ModelError::Config(format!(
                    "A entry (lag {}, index {}) out of range for q={}, l={}",
                    entry.lag, entry.index, self.q, self.l
                )));
            }
            let k = (entry.lag - 1) * self.l + (entry.index - 1);
            if coeffs[k].is_some() {
                return Err(ModelError::Config(format!(
                    "duplicate A entry (lag {}, index {})",
                    entry.lag, entry.index
                )));
            }
            coeffs[k] = Some(matrix_from_rows(
                &entry.matrix,
                &format!("A (lag {}, index {})", entry.lag, entry.index),
            )?);
        }
        let coefficients = coeffs.into_iter().map(|m| m.unwrap()).collect();
        ModelSpec::new(self.d, self.q, self.l, c, coefficients)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn smallest_legal_spec_validates() {
        let spec = ModelSpec::scalar(1.0, 1.0).unwrap();
        assert_eq!(spec.state_dim(), 1);
        assert_eq!(spec.coefficients().len(), 1);
    }

    #[test]
    fn indefinite_intercept_rejected() {
        // Eigenvalues 3 and -1.
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let a = vec![DMatrix::identity(2, 2)];
        match ModelSpec::new(2, 1, 1, c, a) {
            Err(ModelError::NotPositiveDefinite) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn intercept_symmetrized_before_test() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.1, 1.0]);
        let spec = ModelSpec::new(2, 1, 1, c, vec![DMatrix::identity(2, 2)]).unwrap();
        assert_abs_diff_eq!(spec.intercept()[(0, 1)], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(spec.intercept()[(1, 0)], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn all_zero_coefficients_rejected() {
        let c = DMatrix::identity(2, 2);
        let a = vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)];
        match ModelSpec::new(2, 1, 2, c, a) {
            Err(ModelError::AllZeroCoefficients) => {}
            other => panic!("expected AllZeroCoefficients, got {other:?}"),
        }
    }

    #[test]
    fn wrong_coefficient_count_rejected() {
        let c = DMatrix::identity(2, 2);
        let a = vec![DMatrix::identity(2, 2)];
        assert!(matches!(
            ModelSpec::new(2, 2, 1, c, a),
            Err(ModelError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn single_entry_coefficient_family_validates() {
        // d = q = 2, l = 4, one nonzero entry per matrix.
        let spec = fixture_single_entry(0.4);
        assert_eq!(spec.coefficients().len(), 8);
        assert_eq!(spec.state_dim(), 4);
    }

    fn fixture_single_entry(a: f64) -> ModelSpec {
        let mut coeffs = Vec::new();
        for _lag in 0..2 {
            for (r, c) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let mut m = DMatrix::zeros(2, 2);
                m[(r, c)] = a;
                coeffs.push(m);
            }
        }
        ModelSpec::new(2, 2, 4, DMatrix::identity(2, 2), coeffs).unwrap()
    }

    #[test]
    fn companion_q1_has_no_deterministic_part() {
        let spec = ModelSpec::new(
            2,
            1,
            1,
            DMatrix::identity(2, 2),
            vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.8])],
        )
        .unwrap();
        let t = spec.companion_template();
        assert_eq!(t.dim(), 2);
        assert!(t.deterministic_part().iter().all(|&x| x == 0.0));
        assert_eq!(t.slots().len(), 1);
    }

    #[test]
    fn companion_q2_d2_block_layout() {
        let spec = fixture_single_entry(0.4);
        let t = spec.companion_template();
        assert_eq!(t.dim(), 4);
        let det = t.deterministic_part();
        // Lower-left 2x2 block is I_2, lower-right is zero.
        for r in 0..2 {
            for c in 0..2 {
                assert_eq!(det[(2 + r, c)], if r == c { 1.0 } else { 0.0 });
                assert_eq!(det[(2 + r, 2 + c)], 0.0);
            }
        }
        assert_eq!(t.slots().len(), 8);
    }

    #[test]
    fn companion_q3_d1_subdiagonal_ones() {
        // Direct construction from the block layout, checked entry by entry.
        let spec = ModelSpec::new(
            1,
            3,
            1,
            DMatrix::from_element(1, 1, 1.0),
            vec![
                DMatrix::from_element(1, 1, 0.5),
                DMatrix::from_element(1, 1, 0.2),
                DMatrix::from_element(1, 1, 0.1),
            ],
        )
        .unwrap();
        let t = spec.companion_template();
        assert_eq!(t.dim(), 3);
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        );
        assert_eq!(t.deterministic_part(), &expected);
        // Substituting the draws reproduces the top row in slot order.
        let m = t.materialize(&[0.5, -1.0, 2.0]);
        assert_abs_diff_eq!(m[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 1)], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 2)], 0.2, epsilon = 1e-15);
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(2, 1)], 1.0);
    }

    #[test]
    fn zero_draws_reproduce_deterministic_part() {
        let spec = fixture_single_entry(0.4);
        let t = spec.companion_template();
        let zeros = vec![0.0; t.slots().len()];
        assert_eq!(&t.materialize(&zeros), t.deterministic_part());
    }

    #[test]
    fn one_step_covariance_zero_state_returns_intercept() {
        let spec = fixture_single_entry(0.4);
        let h = spec.one_step_covariance(&[0.0; 4]).unwrap();
        assert_eq!(&h, spec.intercept());
    }

    #[test]
    fn one_step_covariance_scalar_arithmetic() {
        let spec = ModelSpec::scalar(1.0, 1.0).unwrap();
        let h = spec.one_step_covariance(&[2.0]).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 5.0, epsilon = 1e-15);
    }

    #[test]
    fn one_step_covariance_diagonal_hand_value() {
        let spec = ModelSpec::new(
            2,
            1,
            1,
            DMatrix::identity(2, 2),
            vec![DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.8])],
        )
        .unwrap();
        let h = spec.one_step_covariance(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 1.25, epsilon = 1e-12);
        assert_abs_diff_eq!(h[(1, 1)], 1.64, epsilon = 1e-12);
        // (Ax)(Ax)' couples the components even for diagonal A.
        assert_abs_diff_eq!(h[(0, 1)], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn one_step_covariance_rejects_bad_state() {
        let spec = ModelSpec::scalar(1.0, 1.0).unwrap();
        assert!(matches!(
            spec.one_step_covariance(&[1.0, 2.0]),
            Err(ModelError::ShapeMismatch(_))
        ));
    }

    /// The Gaussian identity behind the SRE representation: the covariance of
    /// the top d coordinates of `M_t x + Q_t`, computed from the template
    /// slots, equals the one-step covariance from the model form.
    #[test]
    fn one_step_distributional_equivalence() {
        let spec = fixture_single_entry(0.4);
        let t = spec.companion_template();
        let state = [0.3, -1.2, 0.7, 2.5];
        let x = DVector::from_row_slice(&state);
        let d = spec.d();
        let mut cov = spec.intercept().clone();
        for k in 0..t.slots().len() {
            let sx = t.placement_matrix(k) * &x;
            let top = sx.rows(0, d).into_owned();
            cov.ger(1.0, &top, &top, 1.0);
        }
        let h = spec.one_step_covariance(&state).unwrap();
        for r in 0..d {
            for c in 0..d {
                assert_abs_diff_eq!(cov[(r, c)], h[(r, c)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn config_roundtrip_and_strictness() {
        let text = r#"{
            "d": 2, "q": 1, "l": 2,
            "C": [[1.0, 0.0], [0.0, 1.0]],
            "A": [
                {"lag": 1, "index": 1, "matrix": [[0.9, 0.3], [0.3, 0.9]]},
                {"lag": 1, "index": 2, "matrix": [[0.4, 0.0], [0.0, 0.4]]}
            ]
        }"#;
        let spec = ModelSpec::from_config_str(text).unwrap();
        assert_eq!((spec.d(), spec.q(), spec.l()), (2, 1, 2));
        assert_abs_diff_eq!(spec.coefficient_at(1, 2)[(0, 0)], 0.4, epsilon = 1e-15);

        let unknown_key = text.replace("\"d\": 2", "\"d\": 2, \"extra\": 1");
        assert!(matches!(
            ModelSpec::from_config_str(&unknown_key),
            Err(ModelError::Config(_))
        ));

        let dup = r#"{
            "d": 1, "q": 1, "l": 1,
            "C": [[1.0]],
            "A": [{"lag": 1, "index": 1, "matrix": [[1.0]]},
                  {"lag": 1, "index": 1, "matrix": [[1.0]]}]
        }"#;
        assert!(matches!(
            ModelSpec::from_config_str(dup),
            Err(ModelError::Config(_))
        ));
    }

    #[test]
    fn hash_distinguishes_specs() {
        let a = ModelSpec::scalar(1.0, 1.0).unwrap();
        let b = ModelSpec::scalar(1.0 + 1e-15, 1.0).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ModelSpec::scalar(1.0, 1.0).unwrap().hash());
    }
}
