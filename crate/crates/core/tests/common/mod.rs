#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scd_core::{BuiltinMap, GeneralizedEquation, PolyhedralSet, SmoothMap, Subspace};

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `{−½x₁ ≤ x₂ ≤ ½x₁}`.
pub fn wedge() -> PolyhedralSet {
    PolyhedralSet::from_rows(2, &[vec![-0.5, 1.0], vec![-0.5, -1.0]], &[0.0, 0.0]).unwrap()
}

pub fn saddle(y: &DVector<f64>) -> GeneralizedEquation {
    GeneralizedEquation::new(SmoothMap::named(BuiltinMap::Saddle, 2).unwrap(), wedge(), y.clone())
        .unwrap()
}

/// Solutions of `y ∈ (x₁, −x₂) + N_C(x)` on the wedge, case by case.
pub fn saddle_inverse(y: &DVector<f64>) -> Vec<DVector<f64>> {
    let (y1, y2) = (y[0], y[1]);
    let z1 = v(&[4.0 / 3.0 * y1 + 2.0 / 3.0 * y2, 2.0 / 3.0 * y1 + 1.0 / 3.0 * y2]);
    let z2 = v(&[y1, -y2]);
    let z3 = v(&[4.0 / 3.0 * y1 - 2.0 / 3.0 * y2, -2.0 / 3.0 * y1 + 1.0 / 3.0 * y2]);
    let mut out = Vec::new();
    if -0.5 * y1 + y2 > 0.0 && 2.0 * y1 + y2 >= 0.0 {
        out.push(z1.clone());
    }
    if -0.5 * y1 + y2 <= 0.0 && -0.5 * y1 - y2 <= 0.0 {
        out.extend([z1.clone(), z2, z3.clone()]);
    }
    if -0.5 * y1 - y2 > 0.0 && 2.0 * y1 - y2 >= 0.0 {
        out.push(z3);
    }
    if 2.0 * y1 + y2 <= 0.0 && 2.0 * y1 - y2 <= 0.0 {
        out.push(DVector::zeros(2));
    }
    out
}

/// Distance from `y` to the lines separating the four cases above, relative to `‖y‖`.
pub fn case_margin(y: &DVector<f64>) -> f64 {
    let lines = [[-0.5, 1.0], [-0.5, -1.0], [2.0, 1.0], [2.0, -1.0]];
    lines
        .iter()
        .map(|l| (l[0] * y[0] + l[1] * y[1]).abs() / (l[0] * l[0] + l[1] * l[1]).sqrt())
        .fold(f64::INFINITY, f64::min)
        / y.norm()
}

/// The four members of `Sp* F(0, 0)` for the saddle problem, from their parametrisations.
pub fn saddle_members() -> [Subspace; 4] {
    let cols = |a: [f64; 4], b: [f64; 4]| {
        Subspace::from_basis(&DMatrix::from_column_slice(4, 2, &[a, b].concat())).unwrap()
    };
    [
        // ((u, v), (u, −v))
        cols([1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, -1.0]),
        // ((u, ½u), (u − ½v, −½u + v))
        cols([1.0, 0.5, 1.0, -0.5], [0.0, 0.0, -0.5, 1.0]),
        // ((u, −½u), (u + ½v, ½u + v))
        cols([1.0, -0.5, 1.0, 0.5], [0.0, 0.0, 0.5, 1.0]),
        // ((0, 0), (u, v))
        cols([0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]),
    ]
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_subspace(rng: &mut ChaCha8Rng, n: usize) -> Subspace {
    loop {
        if let Ok(s) = Subspace::from_basis(&uniform_matrix(rng, 2 * n, n)) {
            return s;
        }
    }
}

/// Orthogonal projection onto the range of `z` by normal equations, independent of the
/// library's SVD-based routines.
pub fn projector(z: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = z.transpose() * z;
    z * gram.try_inverse().expect("full column rank") * z.transpose()
}

/// Largest absolute eigenvalue of a symmetric matrix, i.e. its spectral norm.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, e| a.max(e.abs()))
}

/// Spectral norm via the eigenvalues of `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    sym_norm(&(m.transpose() * m)).sqrt()
}

pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    sym_norm(&(projector(a) - projector(b)))
}
