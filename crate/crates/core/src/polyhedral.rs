//! Polyhedral sets and cones in H-representation.
//!
//! Sets are `{x : A x ≤ b, E x = e}` with every stored row scaled to unit length, so the
//! activity tolerance [`EPS_ACT`] is an absolute distance. Cones carry `b = 0` and
//! additionally remember which rows of the originating set their inequality rows came from.
//!
//! Extreme rays and the lineality space are computed with the double-description method;
//! faces are enumerated by walking the face lattice on the generator/constraint incidence.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScdError};
use crate::generalized_equation::{BundleMember, FaceTag};
use crate::linalg;
use crate::qp;
use crate::subspace::Subspace;

/// Absolute activity tolerance on `A_i x − b_i` after row normalisation.
pub const EPS_ACT: f64 = 1e-8;
/// Tolerance on the distance of a vector to the normal cone.
pub const EPS_NORMAL: f64 = 1e-8;
/// Largest ambient dimension accepted by generator and face enumeration.
pub const MAX_ENUM_DIM: usize = 12;
/// Incidence tolerance between unit generators and unit rows.
const INCIDENCE_TOL: f64 = 1e-9;
const ZERO_ROW: f64 = 1e-12;

fn normalize_rows(
    a: &DMatrix<f64>,
    rhs: Option<&DVector<f64>>,
) -> (Vec<DVector<f64>>, Vec<f64>, Vec<usize>, Vec<f64>) {
    // returns kept rows, their rhs, their original indices, and the rhs of dropped zero rows
    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut idx = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..a.nrows() {
        let row: DVector<f64> = a.row(i).transpose();
        let rhs_i = rhs.map_or(0.0, |r| r[i]);
        let norm = row.norm();
        if norm <= ZERO_ROW {
            dropped.push(rhs_i);
            continue;
        }
        rows.push(row / norm);
        b.push(rhs_i / norm);
        idx.push(i);
    }
    (rows, b, idx, dropped)
}

fn rows_to_matrix(n: usize, rows: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

/// A convex polyhedron `{x : A x ≤ b, E x = e}`.
#[derive(Clone, Debug)]
pub struct PolyhedralSet {
    n: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    e: DMatrix<f64>,
    e_rhs: DVector<f64>,
}

impl PolyhedralSet {
    /// Normalises the rows and checks that the set is nonempty.
    ///
    /// Zero inequality rows are dropped when `b_i ≥ 0`; zero equality rows when `e_i = 0`.
    pub fn new(
        n: usize,
        a: DMatrix<f64>,
        b: DVector<f64>,
        equalities: Option<(DMatrix<f64>, DVector<f64>)>,
    ) -> Result<Self> {
        if a.ncols() != n && a.nrows() > 0 {
            return Err(ScdError::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        if a.nrows() != b.len() {
            return Err(ScdError::DimensionMismatch {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        let (e, e_rhs) = equalities.unwrap_or_else(|| (DMatrix::zeros(0, n), DVector::zeros(0)));
        if (e.ncols() != n && e.nrows() > 0) || e.nrows() != e_rhs.len() {
            return Err(ScdError::DimensionMismatch {
                expected: n,
                found: e.ncols(),
            });
        }
        if a.iter().chain(b.iter()).chain(e.iter()).chain(e_rhs.iter()).any(|v| !v.is_finite()) {
            return Err(ScdError::InvalidInput("non-finite constraint data".into()));
        }
        let (rows, rhs, _, dropped) = normalize_rows(&a, Some(&b));
        if dropped.iter().any(|&bi| bi < 0.0) {
            return Err(ScdError::InfeasibleSet);
        }
        let (erows, erhs, _, edropped) = normalize_rows(&e, Some(&e_rhs));
        if edropped.iter().any(|&ei| ei.abs() > ZERO_ROW) {
            return Err(ScdError::InfeasibleSet);
        }
        let set = Self {
            n,
            a: rows_to_matrix(n, &rows),
            b: DVector::from_vec(rhs),
            e: rows_to_matrix(n, &erows),
            e_rhs: DVector::from_vec(erhs),
        };
        set.project(&DVector::zeros(n))?;
        Ok(set)
    }

    /// Convenience constructor from row slices (inequalities only).
    pub fn from_rows(n: usize, a: &[Vec<f64>], b: &[f64]) -> Result<Self> {
        let am = linalg::matrix_from_rows(a, n)
            .ok_or_else(|| ScdError::InvalidInput("ragged constraint matrix".into()))?;
        Self::new(n, am, DVector::from_column_slice(b), None)
    }

    pub fn whole_space(n: usize) -> Self {
        Self {
            n,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            e: DMatrix::zeros(0, n),
            e_rhs: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Normalised inequality rows.
    pub fn ineq(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn ineq_rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn eq(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn eq_rhs(&self) -> &DVector<f64> {
        &self.e_rhs
    }

    fn rows(&self) -> qp::Rows<'_> {
        qp::Rows {
            ineq: &self.a,
            ineq_rhs: &self.b,
            eq: &self.e,
            eq_rhs: &self.e_rhs,
        }
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(ScdError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Euclidean projection `argmin_{z ∈ C} ‖z − x‖`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        Ok(qp::project(self.rows(), x)?.point)
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let ineq = (&self.a * x - &self.b).iter().fold(0.0f64, |m, v| m.max(*v));
        let eq = (&self.e * x - &self.e_rhs).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ineq.max(eq)
    }

    /// Indices of inequality rows active at `x` within [`EPS_ACT`].
    pub fn active_rows(&self, x: &DVector<f64>) -> Vec<usize> {
        (0..self.a.nrows())
            .filter(|&i| self.a.row(i).dot(&x.transpose()) - self.b[i] >= -EPS_ACT)
            .collect()
    }

    /// Tangent cone `{u : A_i u ≤ 0 (i active), E u = 0}`.
    pub fn tangent_cone(&self, x: &DVector<f64>) -> Result<PolyhedralCone> {
        self.check_dim(x)?;
        let violation = self.violation(x);
        if violation > EPS_ACT {
            return Err(ScdError::PointNotInSet { violation });
        }
        let active = self.active_rows(x);
        let ineq = DMatrix::from_fn(active.len(), self.n, |i, j| self.a[(active[i], j)]);
        Ok(PolyhedralCone {
            n: self.n,
            ineq,
            eq: self.e.clone(),
            labels: active,
        })
    }

    /// Distance from `v` to the normal cone `N_C(x)`.
    ///
    /// By Moreau's decomposition this equals the norm of the projection of `v` onto the
    /// tangent cone, the polar of the normal cone.
    pub fn normal_cone_distance(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(v)?;
        let t = self.tangent_cone(x)?;
        Ok(t.project(v)?.norm())
    }

    /// Critical cone `T_C(x) ∩ [x*]^⊥`, checking that `x* ∈ N_C(x)`.
    pub fn critical_cone(&self, x: &DVector<f64>, xstar: &DVector<f64>) -> Result<PolyhedralCone> {
        self.check_dim(xstar)?;
        let mut k = self.tangent_cone(x)?;
        let residual = k.project(xstar)?.norm();
        if residual > EPS_NORMAL {
            return Err(ScdError::NotANormal { residual });
        }
        let norm = xstar.norm();
        if norm > ZERO_ROW {
            let mut eq = DMatrix::zeros(k.eq.nrows() + 1, self.n);
            eq.view_mut((0, 0), k.eq.shape()).copy_from(&k.eq);
            eq.set_row(k.eq.nrows(), &(xstar / norm).transpose());
            k.eq = eq;
        }
        Ok(k)
    }
}

/// A polyhedral cone `{u : A u ≤ 0, E u = 0}`.
#[derive(Clone, Debug)]
pub struct PolyhedralCone {
    n: usize,
    ineq: DMatrix<f64>,
    eq: DMatrix<f64>,
    /// Row index in the originating set for each inequality row.
    labels: Vec<usize>,
}

impl PolyhedralCone {
    /// Builds a cone from raw rows; zero rows are dropped and the rest normalised.
    pub fn new(n: usize, ineq: DMatrix<f64>, eq: DMatrix<f64>) -> Result<Self> {
        for m in [&ineq, &eq] {
            if m.nrows() > 0 && m.ncols() != n {
                return Err(ScdError::DimensionMismatch {
                    expected: n,
                    found: m.ncols(),
                });
            }
        }
        let (rows, _, labels, _) = normalize_rows(&ineq, None);
        let (erows, _, _, _) = normalize_rows(&eq, None);
        Ok(Self {
            n,
            ineq: rows_to_matrix(n, &rows),
            eq: rows_to_matrix(n, &erows),
            labels,
        })
    }

    pub fn whole_space(n: usize) -> Self {
        Self {
            n,
            ineq: DMatrix::zeros(0, n),
            eq: DMatrix::zeros(0, n),
            labels: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ineq(&self) -> &DMatrix<f64> {
        &self.ineq
    }

    pub fn eq(&self) -> &DMatrix<f64> {
        &self.eq
    }

    /// Originating row index of each inequality row.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Largest constraint violation at `u`.
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        let ineq = (&self.ineq * u).iter().fold(0.0f64, |m, v| m.max(*v));
        let eq = (&self.eq * u).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ineq.max(eq)
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        self.violation(u) <= tol
    }

    pub fn project(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let zeros = DVector::zeros(self.ineq.nrows());
        let ezeros = DVector::zeros(self.eq.nrows());
        let rows = qp::Rows {
            ineq: &self.ineq,
            ineq_rhs: &zeros,
            eq: &self.eq,
            eq_rhs: &ezeros,
        };
        Ok(qp::project(rows, u)?.point)
    }

    /// Lineality basis and extreme rays by double description.
    pub fn generators(&self) -> Result<ConeGenerators> {
        if self.n > MAX_ENUM_DIM {
            return Err(ScdError::ScaleLimitExceeded {
                n: self.n,
                limit: MAX_ENUM_DIM,
            });
        }
        if self.ineq.nrows() > 64 {
            return Err(ScdError::ScaleLimitExceeded {
                n: self.ineq.nrows(),
                limit: 64,
            });
        }
        Ok(double_description(self))
    }

    /// Every face of the cone exactly once, largest first.
    pub fn faces(&self) -> Result<Vec<Face>> {
        let gens = self.generators()?;
        let m = self.ineq.nrows();
        let all: u64 = if m == 64 { u64::MAX } else { (1u64 << m) - 1 };
        let incidence: Vec<u64> = gens
            .rays
            .iter()
            .map(|r| incidence_mask(&self.ineq, r))
            .collect();

        // a face is identified by its closed active set
        let closure = |req: u64| -> (u64, Vec<usize>) {
            let rays: Vec<usize> = (0..incidence.len())
                .filter(|&k| incidence[k] & req == req)
                .collect();
            let closed = rays.iter().fold(all, |acc, &k| acc & incidence[k]);
            (closed, rays)
        };

        let mut seen: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut queue = VecDeque::new();
        let (root, root_rays) = closure(0);
        seen.insert(root, root_rays);
        queue.push_back(root);
        while let Some(mask) = queue.pop_front() {
            for i in 0..m {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let (child, rays) = closure(mask | (1 << i));
                if !seen.contains_key(&child) {
                    seen.insert(child, rays);
                    queue.push_back(child);
                }
            }
        }

        let mut faces: Vec<Face> = seen
            .into_iter()
            .map(|(mask, rays)| {
                let active: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
                let generators = ConeGenerators {
                    lineality: gens.lineality.clone(),
                    rays: rays.iter().map(|&k| gens.rays[k].clone()).collect(),
                };
                let span_basis = linalg::orth(&generators.matrix(self.n), INCIDENCE_TOL);
                Face {
                    active,
                    generators,
                    span_basis,
                }
            })
            .collect();
        faces.sort_by(|f, g| {
            g.dimension()
                .cmp(&f.dimension())
                .then_with(|| f.active.cmp(&g.active))
        });
        Ok(faces)
    }
}

fn incidence_mask(rows: &DMatrix<f64>, r: &DVector<f64>) -> u64 {
    (0..rows.nrows())
        .filter(|&i| rows.row(i).dot(&r.transpose()).abs() <= INCIDENCE_TOL)
        .fold(0u64, |acc, i| acc | (1 << i))
}

/// V-representation of a cone: `lin(lineality) + cone(rays)`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConeGenerators {
    /// Orthonormal basis of the lineality space.
    pub lineality: Vec<DVector<f64>>,
    /// Unit extreme rays, orthogonal to the lineality space.
    pub rays: Vec<DVector<f64>>,
}

impl ConeGenerators {
    pub fn is_empty(&self) -> bool {
        self.lineality.is_empty() && self.rays.is_empty()
    }

    pub fn len(&self) -> usize {
        self.lineality.len() + self.rays.len()
    }

    /// All generators as columns, lineality first.
    pub fn matrix(&self, n: usize) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self
            .lineality
            .iter()
            .chain(self.rays.iter())
            .cloned()
            .collect();
        linalg::hstack(n, &cols)
    }
}

/// A face `{u ∈ K : A_J u = 0}` of a polyhedral cone.
#[derive(Clone, Debug)]
pub struct Face {
    /// All inequality rows of the parent cone that vanish on the face, sorted.
    pub active: Vec<usize>,
    pub generators: ConeGenerators,
    /// Orthonormal basis of `F − F` (columns).
    pub span_basis: DMatrix<f64>,
}

impl Face {
    pub fn dimension(&self) -> usize {
        self.span_basis.ncols()
    }

    /// Orthogonal projection onto `F − F`.
    pub fn span_projection(&self) -> DMatrix<f64> {
        &self.span_basis * self.span_basis.transpose()
    }

    /// `(F − F) × (F − F)^⊥ = rge(B, I − B)` with `B` the projection onto `F − F`.
    pub fn normal_cone_subspace(&self) -> Subspace {
        let n = self.span_basis.nrows();
        let b = self.span_projection();
        let i = DMatrix::identity(n, n);
        // rge(B, I − B) always has full column rank n since B and I − B are complementary
        Subspace::from_blocks(&b, &(i - &b)).expect("rge(B, I - B) has rank n")
    }
}

/// Double description (Motzkin) with the combinatorial adjacency test.
fn double_description(cone: &PolyhedralCone) -> ConeGenerators {
    // restrict to the null space of the equality rows
    let basis = linalg::null_space(&cone.eq, 1e-10);
    let k = basis.ncols();
    let reduced = &cone.ineq * &basis;

    let mut lineality: Vec<DVector<f64>> =
        (0..k).map(|j| DVector::from_fn(k, |i, _| if i == j { 1.0 } else { 0.0 })).collect();
    let mut rays: Vec<(DVector<f64>, u64)> = Vec::new();
    let mut processed: u64 = 0;

    for row_idx in 0..reduced.nrows() {
        let row: DVector<f64> = reduced.row(row_idx).transpose();
        let row_norm = row.norm();
        let bit = 1u64 << row_idx;
        if row_norm <= ZERO_ROW {
            // the row vanishes on the subspace: every generator is incident
            for r in rays.iter_mut() {
                r.1 |= bit;
            }
            processed |= bit;
            continue;
        }
        let a = row / row_norm;

        let pivot = lineality
            .iter()
            .enumerate()
            .map(|(j, l)| (j, a.dot(l)))
            .filter(|(_, d)| d.abs() > INCIDENCE_TOL)
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()));

        if let Some((j, d)) = pivot {
            let mut l0 = lineality.remove(j);
            if d > 0.0 {
                l0 = -l0;
            }
            let d0 = a.dot(&l0);
            for l in lineality.iter_mut() {
                let c = a.dot(l) / d0;
                *l -= &l0 * c;
            }
            lineality = orthonormalize(lineality);
            for (r, mask) in rays.iter_mut() {
                let c = a.dot(r) / d0;
                *r -= &l0 * c;
                let nr = r.norm();
                *r /= nr;
                *mask |= bit;
            }
            let nl = l0.norm();
            rays.push((l0 / nl, processed));
            processed |= bit;
            continue;
        }

        let vals: Vec<f64> = rays.iter().map(|(r, _)| a.dot(r)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] > INCIDENCE_TOL).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&i| vals[i] < -INCIDENCE_TOL).collect();

        let mut next: Vec<(DVector<f64>, u64)> = Vec::new();
        for (i, (r, mask)) in rays.iter().enumerate() {
            if vals[i] < -INCIDENCE_TOL {
                next.push((r.clone(), *mask));
            } else if vals[i].abs() <= INCIDENCE_TOL {
                next.push((r.clone(), *mask | bit));
            }
        }
        for &p in &pos {
            for &q in &neg {
                let common = rays[p].1 & rays[q].1;
                let adjacent = !(0..rays.len())
                    .any(|o| o != p && o != q && rays[o].1 & common == common);
                if !adjacent {
                    continue;
                }
                let mut r = &rays[q].0 * vals[p] - &rays[p].0 * vals[q];
                let nr = r.norm();
                if nr <= ZERO_ROW {
                    continue;
                }
                r /= nr;
                next.push((r, common | bit));
            }
        }
        rays = next;
        processed |= bit;
    }

    // back to R^n, rays orthogonal to the lineality space
    let lineality: Vec<DVector<f64>> = lineality.iter().map(|l| &basis * l).collect();
    let lineality = orthonormalize(lineality);
    let rays = rays
        .into_iter()
        .filter_map(|(r, _)| {
            let mut v = &basis * r;
            for l in &lineality {
                let c = l.dot(&v);
                v -= l * c;
            }
            let nv = v.norm();
            (nv > 1e-12).then(|| v / nv)
        })
        .collect();
    ConeGenerators { lineality, rays }
}

fn orthonormalize(vs: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(vs.len());
    for v in vs {
        let mut w = v;
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&w);
                w -= q * c;
            }
        }
        let nw = w.norm();
        if nw > 1e-12 {
            out.push(w / nw);
        }
    }
    out
}

/// One bundle member `rge(B, I − B)` per face of the critical cone `K_C(x, x*)`.
pub fn sp_star_normal_cone(
    set: &PolyhedralSet,
    x: &DVector<f64>,
    xstar: &DVector<f64>,
) -> Result<Vec<BundleMember>> {
    let k = set.critical_cone(x, xstar)?;
    let faces = k.faces()?;
    Ok(faces
        .iter()
        .map(|f| BundleMember {
            subspace: f.normal_cone_subspace(),
            face: Some(FaceTag {
                active: f.active.iter().map(|&i| k.labels[i]).collect(),
                dimension: f.dimension(),
            }),
        })
        .collect())
}

/// JSON form of a polyhedral set; `n` is only needed when `A` has no rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyhedralSetJson {
    #[serde(rename = "A", default)]
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
    #[serde(rename = "e", default, skip_serializing_if = "Option::is_none")]
    pub e_rhs: Option<Vec<f64>>,
}

impl PolyhedralSetJson {
    pub fn into_set(self, n: usize) -> Result<PolyhedralSet> {
        let ragged = || ScdError::InvalidInput("ragged constraint matrix".into());
        let a = linalg::matrix_from_rows(&self.a, n).ok_or_else(ragged)?;
        let eqs = match (self.e, self.e_rhs) {
            (Some(e), Some(f)) => Some((
                linalg::matrix_from_rows(&e, n).ok_or_else(ragged)?,
                DVector::from_vec(f),
            )),
            (None, None) => None,
            _ => {
                return Err(ScdError::InvalidInput(
                    "\"E\" and \"e\" must be given together".into(),
                ))
            }
        };
        PolyhedralSet::new(n, a, DVector::from_vec(self.b), eqs)
    }
}

impl From<&PolyhedralSet> for PolyhedralSetJson {
    fn from(s: &PolyhedralSet) -> Self {
        let has_eq = s.e.nrows() > 0;
        Self {
            a: linalg::matrix_to_rows(&s.a),
            b: s.b.iter().copied().collect(),
            e: has_eq.then(|| linalg::matrix_to_rows(&s.e)),
            e_rhs: has_eq.then(|| s.e_rhs.iter().copied().collect()),
        }
    }
}
