//! Canonical model fixtures used by the test suites and the `reproduce`
//! command. Parameter values are fixed here once so every consumer sees the
//! same models.

use nalgebra::DMatrix;

use crate::model::ModelSpec;

fn m2(e: [f64; 4]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &e)
}

/// Two stacked univariate ARCH(1) processes: `A_i = a_i e_i e_i'`.
pub fn stacked_arch(a1: f64, a2: f64) -> ModelSpec {
    ModelSpec::new(
        2,
        1,
        2,
        DMatrix::identity(2, 2),
        vec![m2([a1, 0.0, 0.0, 0.0]), m2([0.0, 0.0, 0.0, a2])],
    )
    .unwrap()
}

/// Single upper-triangular coefficient `[[a, c], [0, b]]`, distinct |a|, |b|.
pub fn upper_triangular_single(a: f64, b: f64, c: f64) -> ModelSpec {
    ModelSpec::new(2, 1, 1, DMatrix::identity(2, 2), vec![m2([a, c, 0.0, b])]).unwrap()
}

/// Commuting pair: symmetric circulant plus a scaled identity.
pub fn commuting_pair(a: f64, b: f64, c: f64) -> ModelSpec {
    ModelSpec::new(
        2,
        1,
        2,
        DMatrix::identity(2, 2),
        vec![m2([a, b, b, a]), m2([c, 0.0, 0.0, c])],
    )
    .unwrap()
}

/// d = 3 single coefficient with a repeated eigenvalue block:
/// `[[a,0,0],[0,a,0],[0,c,b]]`.
pub fn repeated_eigenvalue_3d(a: f64, b: f64, c: f64) -> ModelSpec {
    ModelSpec::new(
        3,
        1,
        1,
        DMatrix::identity(3, 3),
        vec![DMatrix::from_row_slice(
            3,
            3,
            &[a, 0.0, 0.0, 0.0, a, 0.0, 0.0, c, b],
        )],
    )
    .unwrap()
}

/// d = 3 equicorrelated coefficient: a on the diagonal, b off it.
pub fn equicorrelated_3d(a: f64, b: f64) -> ModelSpec {
    ModelSpec::new(
        3,
        1,
        1,
        DMatrix::identity(3, 3),
        vec![DMatrix::from_row_slice(
            3,
            3,
            &[a, b, b, b, a, b, b, b, a],
        )],
    )
    .unwrap()
}

/// Triangular pair: Jordan-like `[[a,b],[0,a]]` with `diag(c, c_tilde)`.
pub fn triangular_pair(a: f64, b: f64, c: f64, c_tilde: f64) -> ModelSpec {
    ModelSpec::new(
        2,
        1,
        2,
        DMatrix::identity(2, 2),
        vec![m2([a, b, 0.0, a]), m2([c, 0.0, 0.0, c_tilde])],
    )
    .unwrap()
}

/// Non-triangular but simultaneously triangularizable pair.
pub fn rotated_triangular_pair(a: f64, b: f64, c: f64) -> ModelSpec {
    ModelSpec::new(
        2,
        1,
        2,
        DMatrix::identity(2, 2),
        vec![
            m2([a, (b - a) / 2.0, (a - b) / 2.0, b]),
            m2([a, c, a - b + c, b]),
        ],
    )
    .unwrap()
}

/// d = q = 2, l = 4: one nonzero entry per coefficient, all lags full.
pub fn single_entry_q2(a: f64) -> ModelSpec {
    let mut coeffs = Vec::with_capacity(8);
    for _lag in 0..2 {
        for (r, c) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let mut m = DMatrix::zeros(2, 2);
            m[(r, c)] = a;
            coeffs.push(m);
        }
    }
    ModelSpec::new(2, 2, 4, DMatrix::identity(2, 2), coeffs).unwrap()
}

/// q = 1, l = 4 single-entry basis of the 2x2 matrices.
pub fn single_entry_q1(a: f64) -> ModelSpec {
    let mut coeffs = Vec::with_capacity(4);
    for (r, c) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        let mut m = DMatrix::zeros(2, 2);
        m[(r, c)] = a;
        coeffs.push(m);
    }
    ModelSpec::new(2, 1, 4, DMatrix::identity(2, 2), coeffs).unwrap()
}

/// The mirrored pair `[[a,b],[b,a]]`, `[[a,b],[-b,-a]]` with |a| > |b|:
/// neither simultaneously diagonalizable nor triangularizable.
pub fn mirrored_pair(a: f64, b: f64) -> ModelSpec {
    ModelSpec::new(
        2,
        1,
        2,
        DMatrix::identity(2, 2),
        vec![m2([a, b, b, a]), m2([a, b, -b, -a])],
    )
    .unwrap()
}

/// Fixture ids accepted by `reproduce`, with the canonical parameter values.
pub fn by_example_id(id: &str) -> Option<ModelSpec> {
    match id {
        "5.1" => Some(stacked_arch(0.6, 1.2)),
        "5.2" | "6.2" => Some(upper_triangular_single(0.5, 0.8, 0.2)),
        "5.3" => Some(commuting_pair(0.9, 0.3, 0.4)),
        "5.4" => Some(repeated_eigenvalue_3d(0.5, 0.8, 0.2)),
        "5.6" => Some(equicorrelated_3d(0.5, 0.2)),
        "6.4" => Some(triangular_pair(0.4, 1.0, 0.5, 1.1)),
        "6.5" => Some(rotated_triangular_pair(0.5, 0.9, 0.3)),
        "7.5" => Some(single_entry_q2(0.4)),
        "7.6" => Some(mirrored_pair(0.8, 0.3)),
        _ => None,
    }
}

/// All ids `by_example_id` accepts, in presentation order.
pub const EXAMPLE_IDS: [&str; 10] = [
    "5.1", "5.2", "5.3", "5.4", "5.6", "6.2", "6.4", "6.5", "7.5", "7.6",
];
