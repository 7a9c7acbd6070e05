//! Algebraic classification of the coefficient family {A_ij}.
//!
//! For q = 1 the SRE matrix is `M_t = Σ_j m_{j,t} A_j`, and the tail theory
//! depends on whether the family is simultaneously diagonalizable
//! (`D_j = P A_j P^{-1}` diagonal) or, for d = 2, simultaneously
//! triangularizable (`U_j = P A_j P^{-1}` upper triangular). This module
//! detects those structures numerically and produces the transform `P`
//! together with the transformed coefficients.
//!
//! Everything is plain floating-point linear algebra against a relative
//! tolerance `tol_struct = 1e-8 * (1 + max_j ||A_j||)`; the exact-algebra
//! statements of the theory have no meaning at f64 without one.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::model::ModelSpec;
use crate::rng::NormalStream;

/// Seed for the generic-combination coefficients; fixed so the decomposition
/// is a deterministic function of its input.
const COMBINATION_SEED: u64 = 0x5eed_d1a6;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("no real diagonalization exists (complex eigenvalues)")]
    ComplexEigenvalues,
    #[error("matrix is defective (not diagonalizable)")]
    NotDiagonalizable,
    #[error("family is not simultaneously diagonalizable")]
    NotSimultaneouslyDiagonalizable,
    #[error("no common real eigenvector (family is not simultaneously triangularizable)")]
    NoCommonRealEigenvector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StructureKind {
    AlreadyDiagonal,
    SimDiagonalizable,
    SimTriangularizable2D,
    General,
}

/// A similarity transform that exhibits the family's joint structure.
///
/// `transformed_j ~= P A_j P^-1` with `transformed_j` exactly diagonal
/// (or exactly upper triangular); `residual` is the largest operator-norm
/// error of that approximation over j.
#[derive(Debug, Clone)]
pub struct StructureDecomposition {
    pub kind: StructureKind,
    pub p: DMatrix<f64>,
    pub p_inv: DMatrix<f64>,
    pub transformed: Vec<DMatrix<f64>>,
    pub residual: f64,
    pub tol: f64,
}

impl StructureDecomposition {
    /// Trivial decomposition for families handled by the general theory.
    pub fn general(d: usize) -> Self {
        Self {
            kind: StructureKind::General,
            p: DMatrix::identity(d, d),
            p_inv: DMatrix::identity(d, d),
            transformed: Vec::new(),
            residual: 0.0,
            tol: 0.0,
        }
    }

    /// Diagonal entries of the transformed coefficients, one row per j.
    pub fn diagonals(&self) -> Vec<DVector<f64>> {
        self.transformed.iter().map(|m| m.diagonal()).collect()
    }
}

/// Operator 2-norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    m.clone().singular_values()[0]
}

/// Spectral radius: largest eigenvalue modulus of a (possibly nonsymmetric)
/// square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert_eq!(m.nrows(), m.ncols(), "spectral_radius needs a square matrix");
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Relative tolerance used throughout the structure detection.
pub fn tol_struct(mats: &[DMatrix<f64>]) -> f64 {
    let max_norm = mats.iter().map(op_norm).fold(0.0, f64::max);
    1e-8 * (1.0 + max_norm)
}

/// True iff every pair commutes: `||A_i A_j - A_j A_i|| <= tol (1 + ||A_i|| ||A_j||)`.
pub fn check_commuting(mats: &[DMatrix<f64>]) -> bool {
    let tol = tol_struct(mats);
    for i in 0..mats.len() {
        for j in (i + 1)..mats.len() {
            let commutator = &mats[i] * &mats[j] - &mats[j] * &mats[i];
            let scale = 1.0 + op_norm(&mats[i]) * op_norm(&mats[j]);
            if op_norm(&commutator) > tol * scale {
                return false;
            }
        }
    }
    true
}

fn is_diagonal(m: &DMatrix<f64>, tol: f64) -> bool {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if r != c && m[(r, c)].abs() > tol {
                return false;
            }
        }
    }
    true
}

fn is_upper_triangular(m: &DMatrix<f64>, tol: f64) -> bool {
    for r in 0..m.nrows() {
        for c in 0..r {
            if m[(r, c)].abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Orthonormal basis of the (numerical) nullspace of `m`: right singular
/// vectors whose singular value is at most `rank_tol`.
fn nullspace_basis(m: &DMatrix<f64>, rank_tol: f64) -> Vec<DVector<f64>> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let mut basis = Vec::new();
    let k = svd.singular_values.len();
    for i in 0..k {
        if svd.singular_values[i] <= rank_tol {
            basis.push(v_t.row(i).transpose());
        }
    }
    // Rectangular input: rows of v_t beyond the singular-value count also
    // span the nullspace (not needed for square inputs used here).
    for i in k..v_t.nrows() {
        basis.push(v_t.row(i).transpose());
    }
    basis
}

fn real_eigenvalues(m: &DMatrix<f64>, tol: f64) -> Option<Vec<f64>> {
    let eigs = m.complex_eigenvalues();
    let scale = 1.0 + op_norm(m);
    let mut out = Vec::with_capacity(eigs.len());
    for z in eigs.iter() {
        if z.im.abs() > tol * scale {
            return None;
        }
        out.push(z.re);
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(out)
}

/// Normalize a column to unit length with its first nonnegligible component
/// positive, so decompositions are unique up to the theory-irrelevant scaling.
fn canonical_column(v: &mut DVector<f64>) {
    let norm = v.norm();
    assert!(norm > 0.0);
    *v /= norm;
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
        if *first < 0.0 {
            *v *= -1.0;
        }
    }
}

fn eigenvalue_of(mat: &DMatrix<f64>, unit_v: &DVector<f64>) -> f64 {
    (mat * unit_v).dot(unit_v)
}

/// Assemble, order, and verify a decomposition from candidate joint
/// eigenvectors. Columns are sorted by their eigenvalue tuple across the
/// family (lexicographic ascending) so the result is deterministic.
fn finish_diagonalization(
    mats: &[DMatrix<f64>],
    mut columns: Vec<DVector<f64>>,
    tol: f64,
) -> Result<StructureDecomposition, StructureError> {
    let d = mats[0].nrows();
    assert_eq!(columns.len(), d);
    for v in columns.iter_mut() {
        canonical_column(v);
    }
    let mut keyed: Vec<(Vec<f64>, DVector<f64>)> = columns
        .into_iter()
        .map(|v| {
            let key = mats.iter().map(|a| eigenvalue_of(a, &v)).collect();
            (key, v)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut p_inv = DMatrix::zeros(d, d);
    for (c, (_, v)) in keyed.iter().enumerate() {
        p_inv.set_column(c, v);
    }
    let p = p_inv
        .clone()
        .try_inverse()
        .ok_or(StructureError::NotDiagonalizable)?;
    if op_norm(&(&p * &p_inv - DMatrix::identity(d, d))) > 1e-10 {
        return Err(StructureError::NotDiagonalizable);
    }

    let mut transformed = Vec::with_capacity(mats.len());
    let mut residual: f64 = 0.0;
    for a in mats {
        let t = &p * a * &p_inv;
        if !is_diagonal(&t, tol) {
            return Err(StructureError::NotSimultaneouslyDiagonalizable);
        }
        let diag = DMatrix::from_diagonal(&t.diagonal());
        residual = residual.max(op_norm(&(&t - &diag)));
        transformed.push(diag);
    }
    Ok(StructureDecomposition {
        kind: StructureKind::SimDiagonalizable,
        p,
        p_inv,
        transformed,
        residual,
        tol,
    })
}

/// Simultaneous diagonalization over the reals.
///
/// For l >= 2 the family must commute. The search first eigendecomposes a
/// generic random combination `Σ c_j A_j` (coefficients from a fixed seed) and
/// checks that its eigenbasis diagonalizes every member; on repeated
/// eigenvalues it retries with fresh coefficients up to five times and then
/// falls back to blockwise refinement of joint eigenspaces.
pub fn simultaneous_diagonalize(
    mats: &[DMatrix<f64>],
) -> Result<StructureDecomposition, StructureError> {
    assert!(!mats.is_empty());
    let d = mats[0].nrows();
    assert!(mats.iter().all(|m| m.nrows() == d && m.ncols() == d));
    let tol = tol_struct(mats);

    if mats.iter().all(|m| is_diagonal(m, tol)) {
        let mut transformed = Vec::with_capacity(mats.len());
        let mut residual: f64 = 0.0;
        for a in mats {
            let diag = DMatrix::from_diagonal(&a.diagonal());
            residual = residual.max(op_norm(&(a - &diag)));
            transformed.push(diag);
        }
        return Ok(StructureDecomposition {
            kind: StructureKind::AlreadyDiagonal,
            p: DMatrix::identity(d, d),
            p_inv: DMatrix::identity(d, d),
            transformed,
            residual,
            tol,
        });
    }

    if mats.len() >= 2 && !check_commuting(mats) {
        return Err(StructureError::NotSimultaneouslyDiagonalizable);
    }

    let mut saw_only_complex = true;
    for attempt in 0..5 {
        let b = generic_combination(mats, attempt);
        let scale = 1.0 + op_norm(&b);
        let Some(eigs) = real_eigenvalues(&b, tol) else {
            continue;
        };
        saw_only_complex = false;
        let separated = eigs
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() > 1e-6 * scale);
        if !separated {
            continue;
        }
        let mut columns = Vec::with_capacity(d);
        let mut ok = true;
        for &lambda in &eigs {
            let shifted = &b - DMatrix::from_diagonal_element(d, d, lambda);
            let basis = nullspace_basis(&shifted, 1e-8 * scale);
            match basis.into_iter().next() {
                Some(v) => columns.push(v),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        if let Ok(dec) = finish_diagonalization(mats, columns, tol) {
            return Ok(dec);
        }
    }
    if saw_only_complex {
        // A real combination of a real simultaneously diagonalizable family
        // always has real eigenvalues, so persistent complex spectra rule the
        // structure out.
        return Err(StructureError::ComplexEigenvalues);
    }
    blockwise_refinement(mats, tol)
}

fn generic_combination(mats: &[DMatrix<f64>], attempt: u64) -> DMatrix<f64> {
    let d = mats[0].nrows();
    if mats.len() == 1 {
        return mats[0].clone();
    }
    let mut stream = NormalStream::new(COMBINATION_SEED, attempt);
    let mut coeffs: Vec<f64> = (0..mats.len()).map(|_| stream.next_normal()).collect();
    let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in coeffs.iter_mut() {
        *c /= norm;
    }
    let mut b = DMatrix::zeros(d, d);
    for (c, a) in coeffs.iter().zip(mats) {
        b += a * *c;
    }
    b
}

/// Joint-eigenspace refinement for families whose spectra genuinely repeat.
///
/// Starts from the whole space and, for each family member in turn, splits
/// every current subspace into the eigenspaces of the member's restriction.
/// For a commuting family every current subspace is invariant, so the
/// restriction `Q' A Q` (orthonormal `Q`) is well defined; a defective
/// restriction surfaces as an eigenvalue cluster whose nullspace is too small.
fn blockwise_refinement(
    mats: &[DMatrix<f64>],
    tol: f64,
) -> Result<StructureDecomposition, StructureError> {
    let d = mats[0].nrows();
    let mut blocks: Vec<DMatrix<f64>> = vec![DMatrix::identity(d, d)];
    for a in mats {
        let mut next = Vec::new();
        for q in &blocks {
            let m = q.ncols();
            if m == 1 {
                next.push(q.clone());
                continue;
            }
            // Invariance check: A Q must stay inside span(Q).
            let aq = a * q;
            let proj = q * (q.transpose() * &aq);
            if op_norm(&(&aq - &proj)) > tol * (1.0 + op_norm(a)) * 10.0 {
                return Err(StructureError::NotSimultaneouslyDiagonalizable);
            }
            let r = q.transpose() * &aq;
            let scale = 1.0 + op_norm(&r);
            let eigs = real_eigenvalues(&r, tol).ok_or(StructureError::ComplexEigenvalues)?;
            // Cluster the sorted eigenvalues, then split by nullspaces.
            let mut clusters: Vec<(f64, usize)> = Vec::new();
            for &e in &eigs {
                match clusters.last_mut() {
                    Some((val, count)) if (e - *val).abs() <= 1e-6 * scale => {
                        *val = (*val * *count as f64 + e) / (*count as f64 + 1.0);
                        *count += 1;
                    }
                    _ => clusters.push((e, 1)),
                }
            }
            for (lambda, mult) in clusters {
                let shifted = &r - DMatrix::from_diagonal_element(m, m, lambda);
                let basis = nullspace_basis(&shifted, 1e-6 * scale);
                if basis.len() < mult {
                    return Err(if mats.len() == 1 {
                        StructureError::NotDiagonalizable
                    } else {
                        StructureError::NotSimultaneouslyDiagonalizable
                    });
                }
                // Orthonormalize the selected nullspace vectors inside the block.
                let mut sub = DMatrix::zeros(m, mult);
                for (c, v) in basis.iter().take(mult).enumerate() {
                    sub.set_column(c, v);
                }
                let qr = sub.qr();
                next.push(q * qr.q().columns(0, mult).into_owned());
            }
        }
        blocks = next;
    }
    let mut columns = Vec::with_capacity(d);
    for q in &blocks {
        for c in 0..q.ncols() {
            columns.push(q.column(c).into_owned());
        }
    }
    if columns.len() != d {
        return Err(StructureError::NotSimultaneouslyDiagonalizable);
    }
    finish_diagonalization(mats, columns, tol)
}

/// Real unit eigenvectors of a 2x2 matrix, sorted by eigenvalue ascending.
/// Returns an empty list when the eigenvalues are complex.
fn real_unit_eigenvectors_2x2(a: &DMatrix<f64>, tol: f64) -> Vec<DVector<f64>> {
    let (a11, a12, a21, a22) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a21;
    let disc = tr * tr - 4.0 * det;
    let scale = 1.0 + op_norm(a);
    if disc < -tol * scale * scale {
        return Vec::new();
    }
    let sqrt_disc = disc.max(0.0).sqrt();
    let mut out = Vec::new();
    for lambda in [(tr - sqrt_disc) / 2.0, (tr + sqrt_disc) / 2.0] {
        let r1 = DVector::from_row_slice(&[a11 - lambda, a12]);
        let r2 = DVector::from_row_slice(&[a21, a22 - lambda]);
        let row = if r1.norm() >= r2.norm() { r1 } else { r2 };
        let mut v = if row.norm() > tol * scale {
            DVector::from_row_slice(&[row[1], -row[0]])
        } else {
            // (Near-)scaled identity: every direction is an eigenvector;
            // offer the axes as representatives.
            out.push(DVector::from_row_slice(&[1.0, 0.0]));
            out.push(DVector::from_row_slice(&[0.0, 1.0]));
            continue;
        };
        canonical_column(&mut v);
        out.push(v);
    }
    out
}

/// Simultaneous upper triangularization for d = 2.
///
/// An upper triangular `P A P^-1` forces the first column of `P^-1` to be an
/// eigenvector of every `A_j`, so the search enumerates the real eigenvector
/// directions of each member and of one generic combination, and keeps the
/// first direction invariant under the whole family. `P^-1 = [v, w]` with `w`
/// the unit vector orthogonal to `v`, which maximizes |det|.
pub fn simultaneous_triangularize_2d(
    mats: &[DMatrix<f64>],
) -> Result<StructureDecomposition, StructureError> {
    assert!(!mats.is_empty());
    assert!(
        mats.iter().all(|m| m.nrows() == 2 && m.ncols() == 2),
        "triangularization is implemented for d = 2 only"
    );
    let tol = tol_struct(mats);

    let mut candidates: Vec<DVector<f64>> = Vec::new();
    for a in mats {
        candidates.extend(real_unit_eigenvectors_2x2(a, tol));
    }
    for attempt in 0..2 {
        let b = generic_combination(mats, attempt);
        candidates.extend(real_unit_eigenvectors_2x2(&b, tol));
    }

    let mut common: Option<DVector<f64>> = None;
    'candidates: for v in &candidates {
        if let Some(found) = &common {
            if found.dot(v).abs() > 1.0 - 1e-10 {
                continue;
            }
        }
        for a in mats {
            let av = a * v;
            let lambda = av.dot(v);
            if (av - v * lambda).norm() > tol * (1.0 + op_norm(a)) {
                continue 'candidates;
            }
        }
        common = Some(v.clone());
        break;
    }
    let mut v = common.ok_or(StructureError::NoCommonRealEigenvector)?;
    canonical_column(&mut v);
    let w = DVector::from_row_slice(&[-v[1], v[0]]);
    let mut p_inv = DMatrix::zeros(2, 2);
    p_inv.set_column(0, &v);
    p_inv.set_column(1, &w);
    let p = p_inv.transpose();

    let mut transformed = Vec::with_capacity(mats.len());
    let mut residual: f64 = 0.0;
    for a in mats {
        let t = &p * a * &p_inv;
        let mut u = t.clone();
        u[(1, 0)] = 0.0;
        residual = residual.max(op_norm(&(&t - &u)));
        if !is_upper_triangular(&t, tol) {
            return Err(StructureError::NoCommonRealEigenvector);
        }
        transformed.push(u);
    }
    Ok(StructureDecomposition {
        kind: StructureKind::SimTriangularizable2D,
        p,
        p_inv,
        transformed,
        residual,
        tol,
    })
}

/// Classify the coefficient family of a validated spec.
///
/// Diagonal and triangular detection applies to q = 1 only (the transforms
/// act on the d-dimensional SRE); anything else is `General`. Joint
/// triangularization for d > 2 is not attempted.
pub fn classify(spec: &ModelSpec) -> StructureDecomposition {
    if spec.q() > 1 {
        return StructureDecomposition::general(spec.state_dim());
    }
    let mats = spec.coefficients().to_vec();
    match simultaneous_diagonalize(&mats) {
        Ok(dec) => dec,
        Err(_) if spec.d() == 2 => match simultaneous_triangularize_2d(&mats) {
            Ok(dec) => dec,
            Err(_) => StructureDecomposition::general(spec.d()),
        },
        Err(_) => StructureDecomposition::general(spec.d()),
    }
}
