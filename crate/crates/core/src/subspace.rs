//! Calculus on the space of `n`-dimensional subspaces of `R^{2n}`.
//!
//! A [`Subspace`] is stored through an orthonormal `2n × n` basis `Z`. Distances are measured
//! with the spectral norm of the difference of the orthogonal projections `Z Zᵀ`, which makes
//! equality independent of the basis that was used to build the value.
//!
//! Vectors of `R^{2n}` are split as `(u, v)` with `u = π₁(z)` the first `n` coordinates and
//! `v = π₂(z)` the last `n`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScdError};
use crate::linalg;

/// Orthonormality tolerance on `ZᵀZ − I`.
pub const EPS_ORTH: f64 = 1e-10;
/// Relative rank / nonsingularity tolerance.
pub const EPS_RANK: f64 = 1e-9;
/// Two subspaces are considered equal when their distance is at most this.
pub const EPS_EQ: f64 = 1e-9;

/// An `n`-dimensional linear subspace of `R^{2n}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SubspaceJson", into = "SubspaceJson")]
pub struct Subspace {
    n: usize,
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Builds `rge m` for a `2n × n` matrix `m` of full column rank.
    pub fn from_basis(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.ncols();
        if m.nrows() != 2 * n {
            return Err(ScdError::DimensionMismatch {
                expected: 2 * n,
                found: m.nrows(),
            });
        }
        if n == 0 {
            return Err(ScdError::InvalidInput("subspace dimension must be positive".into()));
        }
        if !m.iter().all(|x| x.is_finite()) {
            return Err(ScdError::InvalidInput("basis has non-finite entries".into()));
        }
        let sv = linalg::singular_values(m);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smax == 0.0 || smin <= EPS_RANK * smax {
            return Err(ScdError::RankDeficient { expected: n });
        }
        let q = m.clone().col_piv_qr().q();
        Ok(Self { n, basis: q })
    }

    /// Builds `rge(top, bottom) = {(top·p, bottom·p) | p ∈ R^n}`.
    pub fn from_blocks(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> Result<Self> {
        if top.shape() != bottom.shape() || top.nrows() != top.ncols() {
            return Err(ScdError::DimensionMismatch {
                expected: top.nrows(),
                found: bottom.nrows(),
            });
        }
        Self::from_basis(&linalg::vstack(top, bottom))
    }

    /// `R^n × {0}`.
    pub fn horizontal(n: usize) -> Self {
        let basis = linalg::vstack(&DMatrix::identity(n, n), &DMatrix::zeros(n, n));
        Self { n, basis }
    }

    /// `{0} × R^n`.
    pub fn vertical(n: usize) -> Self {
        let basis = linalg::vstack(&DMatrix::zeros(n, n), &DMatrix::identity(n, n));
        Self { n, basis }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The canonical orthonormal basis.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// π₁ of the canonical basis (upper `n × n` block).
    pub fn upper(&self) -> DMatrix<f64> {
        self.basis.rows(0, self.n).into_owned()
    }

    /// π₂ of the canonical basis (lower `n × n` block).
    pub fn lower(&self) -> DMatrix<f64> {
        self.basis.rows(self.n, self.n).into_owned()
    }

    /// Orthogonal projection onto the subspace.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Spectral norm of the difference of the two projections.
    pub fn distance(&self, other: &Subspace) -> Result<f64> {
        if self.n != other.n {
            return Err(ScdError::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(linalg::operator_norm(&(self.projection() - other.projection())))
    }

    /// Equality up to [`EPS_EQ`]; subspaces of different dimension are never equal.
    pub fn approx_eq(&self, other: &Subspace) -> bool {
        self.distance(other).map(|d| d <= EPS_EQ).unwrap_or(false)
    }

    /// Orthonormal basis (`2n × n`) of the orthogonal complement.
    pub fn orthogonal_complement(&self) -> DMatrix<f64> {
        linalg::complement(&self.basis)
    }

    /// The adjoint subspace `L* = S_n L^⊥ = {(−v*, u*) | (u*, v*) ∈ L^⊥}`.
    pub fn adjoint(&self) -> Subspace {
        let perp = self.orthogonal_complement();
        let rotated = TransformMatrix::symplectic(self.n).entries() * perp;
        Subspace {
            n: self.n,
            basis: rotated.col_piv_qr().q(),
        }
    }

    /// True iff no nonzero `(y*, 0)` lies in the subspace, i.e. π₂ of the basis is nonsingular.
    pub fn is_regular(&self) -> bool {
        // the canonical basis is orthonormal, so its largest singular value is 1
        linalg::min_singular_value(&self.lower()) > EPS_RANK
    }

    /// The unique `C_L` with `L = rge(C_L, I)`.
    pub fn c_matrix(&self) -> Result<DMatrix<f64>> {
        if !self.is_regular() {
            return Err(ScdError::NotRegular);
        }
        // C π₂ = π₁  ⇔  π₂ᵀ Cᵀ = π₁ᵀ
        let lu = self.lower().transpose().lu();
        let ct = lu
            .solve(&self.upper().transpose())
            .ok_or(ScdError::NotRegular)?;
        Ok(ct.transpose())
    }

    /// `{T z | z ∈ L}`.
    pub fn transform(&self, t: &TransformMatrix) -> Result<Subspace> {
        if t.n() != self.n {
            return Err(ScdError::DimensionMismatch {
                expected: self.n,
                found: t.n(),
            });
        }
        Subspace::from_basis(&(t.entries() * &self.basis))
    }
}

impl PartialEq for Subspace {
    fn eq(&self, other: &Self) -> bool {
        self.approx_eq(other)
    }
}

/// Spectral norm (largest singular value) of an arbitrary real matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    linalg::operator_norm(m)
}

/// A nonsingular `2n × 2n` matrix acting on subspaces of `R^{2n}`.
#[derive(Clone, Debug)]
pub struct TransformMatrix {
    n: usize,
    entries: DMatrix<f64>,
}

impl TransformMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (r, c) = entries.shape();
        if r != c || r % 2 != 0 || r == 0 {
            return Err(ScdError::DimensionMismatch {
                expected: c,
                found: r,
            });
        }
        // |det| / σ_max^{2n} = Π σ_i / σ_max
        let sv = linalg::singular_values(&entries);
        let smax = sv.iter().copied().fold(0.0, f64::max);
        if smax == 0.0 {
            return Err(ScdError::SingularTransform);
        }
        let log_ratio: f64 = sv.iter().map(|s| (s / smax).ln()).sum();
        if !(log_ratio > EPS_RANK.ln()) {
            return Err(ScdError::SingularTransform);
        }
        Ok(Self { n: r / 2, entries })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            entries: DMatrix::identity(2 * n, 2 * n),
        }
    }

    /// `S_n = [[0, −I], [I, 0]]`.
    pub fn symplectic(n: usize) -> Self {
        let i = DMatrix::<f64>::identity(n, n);
        let z = DMatrix::<f64>::zeros(n, n);
        Self {
            n,
            entries: linalg::block2x2(&z, &(-&i), &i, &z),
        }
    }

    /// `[[I, 0], [J, I]]`: shifts the second component by `J` applied to the first.
    pub fn shear(jacobian: &DMatrix<f64>) -> Result<Self> {
        let n = jacobian.nrows();
        if jacobian.ncols() != n {
            return Err(ScdError::DimensionMismatch {
                expected: n,
                found: jacobian.ncols(),
            });
        }
        let i = DMatrix::<f64>::identity(n, n);
        Ok(Self {
            n,
            entries: linalg::block2x2(&i, &DMatrix::zeros(n, n), jacobian, &i),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

/// Serialised subspace: `basis` is the `2n×n` canonical basis in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceJson {
    pub n: usize,
    pub basis: Vec<f64>,
}

impl TryFrom<SubspaceJson> for Subspace {
    type Error = ScdError;

    fn try_from(j: SubspaceJson) -> Result<Self> {
        if j.basis.len() != 2 * j.n * j.n {
            return Err(ScdError::DimensionMismatch {
                expected: 2 * j.n * j.n,
                found: j.basis.len(),
            });
        }
        Subspace::from_basis(&DMatrix::from_row_slice(2 * j.n, j.n, &j.basis))
    }
}

impl From<&Subspace> for SubspaceJson {
    fn from(s: &Subspace) -> Self {
        let basis = s.basis.transpose().iter().copied().collect();
        SubspaceJson { n: s.n, basis }
    }
}

impl From<Subspace> for SubspaceJson {
    fn from(s: Subspace) -> Self {
        (&s).into()
    }
}
