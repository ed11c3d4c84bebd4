//! Small dense helpers shared by the subspace and polyhedral code.

use nalgebra::{DMatrix, DVector};

/// Thin SVD `m = U diag(s) Vᵀ` with `s` sorted in decreasing order.
///
/// Computed with faer: nalgebra's bidiagonal SVD returns inaccurate factors for some
/// rank-deficient inputs, and most matrices here (projectors, stacked faces) are exactly that.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(rows, 0),
            s: Vec::new(),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let f = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let dec = f.thin_svd().expect("SVD of a finite matrix");
    let (u, s, v) = (dec.U(), dec.S(), dec.V());
    let s: Vec<f64> = (0..k).map(|i| s[i]).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    Svd {
        u: DMatrix::from_fn(rows, k, |i, j| u[(i, order[j])]),
        s: order.iter().map(|&i| s[i]).collect(),
        v: DMatrix::from_fn(cols, k, |i, j| v[(i, order[j])]),
    }
}

/// Singular values of `m` in decreasing order. Empty matrices have none.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    svd(m).s
}

/// Largest singular value (spectral norm). Zero for empty or zero matrices.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Smallest singular value of a square matrix.
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).into_iter().fold(f64::INFINITY, f64::min)
}

/// Orthonormal basis of `rge m`, keeping left singular vectors whose singular value exceeds
/// `rel_tol` times the largest one.
pub fn orth(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let dec = svd(m);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let rank = dec.s.iter().filter(|&&s| s > rel_tol * smax).count();
    dec.u.columns(0, rank).into_owned()
}

/// Minimum-norm least-squares solution of `a x ≈ b`, ignoring singular values below
/// `rel_tol` times the largest.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let dec = svd(a);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let mut x = DVector::zeros(a.ncols());
    for (j, &s) in dec.s.iter().enumerate() {
        if s > rel_tol * smax && s > 0.0 {
            let coef = dec.u.column(j).dot(b) / s;
            x += dec.v.column(j) * coef;
        }
    }
    x
}

/// Orthonormal basis of the orthogonal complement of the span of the orthonormal columns `q`.
pub fn complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let dim = q.nrows();
    let residual = DMatrix::identity(dim, dim) - q * q.transpose();
    let c = orth(&residual, 1e-6);
    debug_assert_eq!(c.ncols() + q.ncols(), dim);
    c
}

/// Orthonormal basis of the null space of `a` (columns in R^{a.ncols()}).
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let row_space = orth(&a.transpose(), rel_tol);
    complement(&row_space)
}

/// Horizontal concatenation of column vectors into an `n × k` matrix.
pub fn hstack(n: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

/// Builds the block matrix `[[a, b], [c, d]]`.
pub fn block2x2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut m = DMatrix::zeros(r1 + r2, c1 + c2);
    m.view_mut((0, 0), (r1, c1)).copy_from(a);
    m.view_mut((0, c1), (r1, c2)).copy_from(b);
    m.view_mut((r1, 0), (r2, c1)).copy_from(c);
    m.view_mut((r1, c1), (r2, c2)).copy_from(d);
    m
}

/// Stacks `top` over `bottom`.
pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.view_mut((0, 0), top.shape()).copy_from(top);
    m.view_mut((top.nrows(), 0), bottom.shape()).copy_from(bottom);
    m
}

pub fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize) -> Option<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
