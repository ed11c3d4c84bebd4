//! The problem `0 ∈ f(x) + N_C(x) − y_target` and its derivative bundles.
//!
//! Bundles of the normal cone come from the faces of the critical cone; the smooth part is
//! folded in with the sum rule, i.e. each member is sheared by `[[I, 0], [∇f, I]]` (primal)
//! or `[[I, 0], [∇fᵀ, I]]` (dual).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScdError};
use crate::linalg;
use crate::polyhedral::{self, PolyhedralSet, PolyhedralSetJson, EPS_NORMAL};
use crate::subspace::{Subspace, TransformMatrix};

/// Built-in nonlinear maps with hand-coded Jacobians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinMap {
    /// `f(x) = x` in any dimension.
    Identity,
    /// `f(x) = 0` in any dimension.
    Zero,
    /// `f(x) = (x₁, −x₂)`.
    Saddle,
    /// `(x₁, −x₂) + (x₁², x₂²)`; gradient of `½x₁² − ½x₂² + (x₁³ + x₂³)/3`.
    SaddleCubic,
    /// `(x₁, −x₂) + (1 − cos x₂, sin x₁ − x₁)`; nonsymmetric Jacobian away from 0.
    SaddleTrig,
    /// `f(x) = x + x³` componentwise.
    CubicShift,
}

impl BuiltinMap {
    pub const ALL: [BuiltinMap; 6] = [
        BuiltinMap::Identity,
        BuiltinMap::Zero,
        BuiltinMap::Saddle,
        BuiltinMap::SaddleCubic,
        BuiltinMap::SaddleTrig,
        BuiltinMap::CubicShift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinMap::Identity => "identity",
            BuiltinMap::Zero => "zero",
            BuiltinMap::Saddle => "saddle",
            BuiltinMap::SaddleCubic => "saddle_cubic",
            BuiltinMap::SaddleTrig => "saddle_trig",
            BuiltinMap::CubicShift => "cubic_shift",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Required dimension, or `None` when the map works in any dimension.
    pub fn fixed_dimension(self) -> Option<usize> {
        match self {
            BuiltinMap::Saddle | BuiltinMap::SaddleCubic | BuiltinMap::SaddleTrig => Some(2),
            _ => None,
        }
    }

    fn eval(self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            BuiltinMap::Identity => x.clone(),
            BuiltinMap::Zero => DVector::zeros(x.len()),
            BuiltinMap::Saddle => DVector::from_vec(vec![x[0], -x[1]]),
            BuiltinMap::SaddleCubic => {
                DVector::from_vec(vec![x[0] + x[0] * x[0], -x[1] + x[1] * x[1]])
            }
            BuiltinMap::SaddleTrig => DVector::from_vec(vec![
                x[0] + 1.0 - x[1].cos(),
                -x[1] + x[0].sin() - x[0],
            ]),
            BuiltinMap::CubicShift => x.map(|t| t + t * t * t),
        }
    }

    fn jacobian(self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        match self {
            BuiltinMap::Identity => DMatrix::identity(n, n),
            BuiltinMap::Zero => DMatrix::zeros(n, n),
            BuiltinMap::Saddle => DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            BuiltinMap::SaddleCubic => DMatrix::from_row_slice(
                2,
                2,
                &[1.0 + 2.0 * x[0], 0.0, 0.0, -1.0 + 2.0 * x[1]],
            ),
            BuiltinMap::SaddleTrig => DMatrix::from_row_slice(
                2,
                2,
                &[1.0, x[1].sin(), x[0].cos() - 1.0, -1.0],
            ),
            BuiltinMap::CubicShift => {
                DMatrix::from_diagonal(&x.map(|t| 1.0 + 3.0 * t * t))
            }
        }
    }
}

/// A continuously differentiable `f : R^n → R^n` with its Jacobian.
#[derive(Clone, Debug)]
pub enum SmoothMap {
    /// `f(x) = M x + q`.
    Affine { m: DMatrix<f64>, q: DVector<f64> },
    Named { map: BuiltinMap, n: usize },
}

impl SmoothMap {
    pub fn affine(m: DMatrix<f64>, q: DVector<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || q.len() != m.nrows() {
            return Err(ScdError::DimensionMismatch {
                expected: m.nrows(),
                found: q.len(),
            });
        }
        Ok(SmoothMap::Affine { m, q })
    }

    pub fn named(map: BuiltinMap, n: usize) -> Result<Self> {
        if let Some(d) = map.fixed_dimension() {
            if d != n {
                return Err(ScdError::DimensionMismatch {
                    expected: d,
                    found: n,
                });
            }
        }
        Ok(SmoothMap::Named { map, n })
    }

    pub fn n(&self) -> usize {
        match self {
            SmoothMap::Affine { q, .. } => q.len(),
            SmoothMap::Named { n, .. } => *n,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SmoothMap::Affine { m, q } => m * x + q,
            SmoothMap::Named { map, .. } => map.eval(x),
        }
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            SmoothMap::Affine { m, .. } => m.clone(),
            SmoothMap::Named { map, .. } => map.jacobian(x),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothMapJson {
    Affine {
        #[serde(rename = "M")]
        m: Vec<Vec<f64>>,
        q: Vec<f64>,
    },
    Named {
        name: String,
    },
}

impl SmoothMapJson {
    pub fn into_map(self, n: usize) -> Result<SmoothMap> {
        match self {
            SmoothMapJson::Affine { m, q } => {
                let m = linalg::matrix_from_rows(&m, n)
                    .filter(|m| m.nrows() == n)
                    .ok_or_else(|| ScdError::InvalidInput("\"M\" must be n×n".into()))?;
                SmoothMap::affine(m, DVector::from_vec(q))
            }
            SmoothMapJson::Named { name } => {
                let map = BuiltinMap::from_name(&name)
                    .ok_or_else(|| ScdError::InvalidInput(format!("unknown map {name:?}")))?;
                SmoothMap::named(map, n)
            }
        }
    }
}

impl From<&SmoothMap> for SmoothMapJson {
    fn from(f: &SmoothMap) -> Self {
        match f {
            SmoothMap::Affine { m, q } => SmoothMapJson::Affine {
                m: linalg::matrix_to_rows(m),
                q: q.iter().copied().collect(),
            },
            SmoothMap::Named { map, .. } => SmoothMapJson::Named {
                name: map.name().to_string(),
            },
        }
    }
}

/// `0 ∈ f(x) + N_C(x) − y_target`.
#[derive(Clone, Debug)]
pub struct GeneralizedEquation {
    smooth: SmoothMap,
    set: PolyhedralSet,
    y_target: DVector<f64>,
}

impl GeneralizedEquation {
    pub fn new(smooth: SmoothMap, set: PolyhedralSet, y_target: DVector<f64>) -> Result<Self> {
        let n = smooth.n();
        for found in [set.n(), y_target.len()] {
            if found != n {
                return Err(ScdError::DimensionMismatch { expected: n, found });
            }
        }
        Ok(Self {
            smooth,
            set,
            y_target,
        })
    }

    pub fn n(&self) -> usize {
        self.smooth.n()
    }

    pub fn smooth(&self) -> &SmoothMap {
        &self.smooth
    }

    pub fn set(&self) -> &PolyhedralSet {
        &self.set
    }

    pub fn y_target(&self) -> &DVector<f64> {
        &self.y_target
    }

    /// Same map and set, different right-hand side.
    pub fn with_y_target(&self, y_target: DVector<f64>) -> Result<Self> {
        Self::new(self.smooth.clone(), self.set.clone(), y_target)
    }

    /// `g(x) = f(x) − y_target`.
    pub fn shifted(&self, x: &DVector<f64>) -> DVector<f64> {
        self.smooth.eval(x) - &self.y_target
    }

    pub fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(ScdError::DimensionMismatch {
                expected: self.n(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// On-disk problem description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemJson {
    pub n: usize,
    pub smooth: SmoothMapJson,
    #[serde(rename = "C")]
    pub set: PolyhedralSetJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_target: Option<Vec<f64>>,
}

impl ProblemJson {
    pub fn into_problem(self) -> Result<GeneralizedEquation> {
        let n = self.n;
        if n == 0 {
            return Err(ScdError::InvalidInput("n must be positive".into()));
        }
        let smooth = self.smooth.into_map(n)?;
        let set = self.set.into_set(n)?;
        let y = self.y_target.map_or_else(|| DVector::zeros(n), DVector::from_vec);
        GeneralizedEquation::new(smooth, set, y)
    }
}

impl From<&GeneralizedEquation> for ProblemJson {
    fn from(ge: &GeneralizedEquation) -> Self {
        Self {
            n: ge.n(),
            smooth: (&ge.smooth).into(),
            set: (&ge.set).into(),
            y_target: Some(ge.y_target.iter().copied().collect()),
        }
    }
}

/// A point `(x, y)` of the graph together with its normal-cone part `v = y + y_target − f(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPoint {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub v: DVector<f64>,
}

/// Validates `x ∈ C`, `v ∈ N_C(x)` and packages `y = f(x) + v − y_target`.
pub fn graph_point(
    ge: &GeneralizedEquation,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<GraphPoint> {
    ge.check_dim(x)?;
    ge.check_dim(v)?;
    let residual = ge.set.normal_cone_distance(x, v)?;
    if residual > EPS_NORMAL {
        return Err(ScdError::NotANormal { residual });
    }
    Ok(GraphPoint {
        x: x.clone(),
        y: ge.shifted(x) + v,
        v: v.clone(),
    })
}

/// Same as [`graph_point`] but from the image component `y`.
pub fn graph_point_from_image(
    ge: &GeneralizedEquation,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<GraphPoint> {
    ge.check_dim(y)?;
    let v = y - ge.shifted(x);
    graph_point(ge, x, &v)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    /// `Sp F`.
    Primal,
    /// `Sp* F`.
    Dual,
}

/// Which face of the critical cone produced a bundle member.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceTag {
    /// Rows of the constraint set vanishing on the face, sorted.
    pub active: Vec<usize>,
    /// Dimension of `F − F`.
    pub dimension: usize,
}

#[derive(Clone, Debug)]
pub struct BundleMember {
    pub subspace: Subspace,
    pub face: Option<FaceTag>,
}

/// A finite collection of subspaces representing `Sp F(x, y)` or `Sp* F(x, y)`.
#[derive(Clone, Debug)]
pub struct DerivativeBundle {
    pub point: GraphPoint,
    pub flavor: Flavor,
    members: Vec<BundleMember>,
}

impl DerivativeBundle {
    /// Drops members equal (up to `EPS_EQ`) to an earlier one.
    pub fn new(point: GraphPoint, flavor: Flavor, members: Vec<BundleMember>) -> Self {
        let mut kept: Vec<BundleMember> = Vec::with_capacity(members.len());
        for m in members {
            if !kept.iter().any(|k| k.subspace.approx_eq(&m.subspace)) {
                kept.push(m);
            }
        }
        Self {
            point,
            flavor,
            members: kept,
        }
    }

    pub fn members(&self) -> &[BundleMember] {
        &self.members
    }

    pub fn subspaces(&self) -> impl Iterator<Item = &Subspace> {
        self.members.iter().map(|m| &m.subspace)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Set equality up to `EPS_EQ`, ignoring order and face tags.
    pub fn same_subspaces(&self, other: &DerivativeBundle) -> bool {
        self.len() == other.len()
            && self
                .subspaces()
                .all(|s| other.subspaces().any(|t| s.approx_eq(t)))
            && other
                .subspaces()
                .all(|s| self.subspaces().any(|t| s.approx_eq(t)))
    }
}

/// `Sp F` or `Sp* F` at a graph point via the faces of `K_C(x, v)` and the sum rule.
pub fn bundle_at(
    ge: &GeneralizedEquation,
    point: &GraphPoint,
    flavor: Flavor,
) -> Result<DerivativeBundle> {
    let members = polyhedral::sp_star_normal_cone(&ge.set, &point.x, &point.v)?;
    let jac = ge.smooth.jacobian(&point.x);
    let shear = match flavor {
        Flavor::Primal => TransformMatrix::shear(&jac)?,
        Flavor::Dual => TransformMatrix::shear(&jac.transpose())?,
    };
    let members = members
        .into_iter()
        .map(|m| {
            Ok(BundleMember {
                subspace: m.subspace.transform(&shear)?,
                face: m.face,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DerivativeBundle::new(point.clone(), flavor, members))
}

/// `{rge(I, A)}` (primal) or `{rge(I, Aᵀ)}` (dual) for a set of Jacobians, without duplicates.
pub fn lift_jacobians(jacobians: &[DMatrix<f64>], flavor: Flavor) -> Result<Vec<Subspace>> {
    let Some(first) = jacobians.first() else {
        return Ok(Vec::new());
    };
    let n = first.nrows();
    let mut out: Vec<Subspace> = Vec::new();
    for a in jacobians {
        if a.nrows() != n || a.ncols() != n {
            return Err(ScdError::DimensionMismatch {
                expected: n,
                found: if a.nrows() != n { a.nrows() } else { a.ncols() },
            });
        }
        let lower = match flavor {
            Flavor::Primal => a.clone(),
            Flavor::Dual => a.transpose(),
        };
        let l = Subspace::from_blocks(&DMatrix::identity(n, n), &lower)?;
        if !out.iter().any(|s| s.approx_eq(&l)) {
            out.push(l);
        }
    }
    Ok(out)
}
