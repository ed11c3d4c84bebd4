//! Semismooth* Newton iteration for `0 ∈ f(x) + N_C(x) − y_target`.
//!
//! Each iteration projects `(x, 0)` approximately onto the graph, picks a regular subspace
//! from the dual bundle at the projected point and moves to `x̂ − C_Lᵀ ŷ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScdError};
use crate::generalized_equation::{
    bundle_at, graph_point, BundleMember, DerivativeBundle, Flavor, GeneralizedEquation,
    GraphPoint,
};
use crate::subspace::{operator_norm, Subspace};

/// How a member of the dual bundle is chosen for the Newton step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceStrategy {
    /// The member generated by the critical cone itself (weakly active rows treated as inactive).
    #[default]
    WholeCriticalCone,
    /// The member generated by the lineality space of the critical cone.
    LinealityFace,
    /// First regular member by decreasing face dimension.
    LargestRegular,
}

impl FromStr for FaceStrategy {
    type Err = ScdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "whole_critical_cone" | "whole" => Ok(FaceStrategy::WholeCriticalCone),
            "lineality_face" | "lineality" => Ok(FaceStrategy::LinealityFace),
            "largest_regular" => Ok(FaceStrategy::LargestRegular),
            _ => Err(ScdError::InvalidInput(format!("unknown face strategy {s:?}"))),
        }
    }
}

impl fmt::Display for FaceStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FaceStrategy::WholeCriticalCone => "whole-critical-cone",
            FaceStrategy::LinealityFace => "lineality-face",
            FaceStrategy::LargestRegular => "largest-regular",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once the natural residual drops to this value. Default `1e-10`.
    pub tol_residual: f64,
    /// Default `50`.
    pub max_iter: usize,
    pub face_strategy: FaceStrategy,
    /// When set together with a reference solution, iterations whose realised
    /// `‖(x̂, ŷ) − (x̄, 0)‖ / ‖x − x̄‖` exceeds this are listed in the trace.
    pub eta_check: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_iter: 50,
            face_strategy: FaceStrategy::default(),
            eta_check: None,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) {
            return Err(ScdError::InvalidInput("tolerance must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(ScdError::InvalidInput("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    NoRegularSubspace,
    ApproximationFailed,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub x: DVector<f64>,
    pub xhat: DVector<f64>,
    pub yhat: DVector<f64>,
    pub subspace: Subspace,
    /// `‖C_L‖` of the selected subspace.
    pub c_norm: f64,
    /// Natural residual at `x`.
    pub residual: f64,
    /// Realised approximation ratio, when a reference solution is known.
    pub eta: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct NewtonTrace {
    pub iterations: Vec<IterationRecord>,
    pub status: SolveStatus,
    /// `‖x⁽ᵏ⁺¹⁾ − x̄‖ / ‖x⁽ᵏ⁾ − x̄‖` per step, when a reference `x̄` is supplied.
    pub rate_ratios: Vec<f64>,
    /// Iterations whose realised η exceeded `SolverOptions::eta_check`.
    pub eta_exceeded: Vec<usize>,
    pub final_x: DVector<f64>,
    pub final_residual: f64,
}

impl NewtonTrace {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn to_json(&self) -> TraceJson {
        let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
        TraceJson {
            status: self.status.to_string(),
            iterations: self
                .iterations
                .iter()
                .map(|it| IterationJson {
                    x: vec(&it.x),
                    xhat: vec(&it.xhat),
                    yhat: vec(&it.yhat),
                    c_norm: it.c_norm,
                    residual: it.residual,
                })
                .collect(),
            rate_ratios: self.rate_ratios.clone(),
            final_x: vec(&self.final_x),
            final_residual: self.final_residual,
        }
    }
}

/// Serialised form of a [`NewtonTrace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceJson {
    pub status: String,
    pub iterations: Vec<IterationJson>,
    pub rate_ratios: Vec<f64>,
    pub final_x: Vec<f64>,
    pub final_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationJson {
    pub x: Vec<f64>,
    pub xhat: Vec<f64>,
    pub yhat: Vec<f64>,
    pub c_norm: f64,
    pub residual: f64,
}

/// `‖x − P_C(x − g(x))‖` with `g = f − y_target`; zero exactly at solutions.
pub fn natural_residual(ge: &GeneralizedEquation, x: &DVector<f64>) -> Result<f64> {
    ge.check_dim(x)?;
    let w = x - ge.shifted(x);
    Ok((x - ge.set().project(&w)?).norm())
}

/// `x̂ = P_C(x − g(x))`, `ŷ = g(x̂) + (x − g(x) − x̂)`; the pair lies on the graph because
/// `x − g(x) − x̂` is normal to `C` at `x̂`.
pub fn approximation_step(ge: &GeneralizedEquation, x: &DVector<f64>) -> Result<GraphPoint> {
    ge.check_dim(x)?;
    let w = x - ge.shifted(x);
    let xhat = ge.set().project(&w)?;
    let v = w - &xhat;
    graph_point(ge, &xhat, &v)
}

/// Members in scan order: decreasing face dimension, ties by the sorted active sets.
fn scan_order(members: &[BundleMember]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..members.len()).collect();
    if members.iter().all(|m| m.face.is_some()) {
        idx.sort_by(|&i, &j| {
            let (fi, fj) = (
                members[i].face.as_ref().expect("tagged"),
                members[j].face.as_ref().expect("tagged"),
            );
            fj.dimension
                .cmp(&fi.dimension)
                .then_with(|| fi.active.cmp(&fj.active))
        });
    }
    idx
}

/// Index of the member chosen by `strategy`, falling back to the first regular member in
/// scan order when the preferred one is not regular.
pub fn select_member(bundle: &DerivativeBundle, strategy: FaceStrategy) -> Result<usize> {
    let members = bundle.members();
    if members.is_empty() {
        return Err(ScdError::EmptyBundle);
    }
    let order = scan_order(members);
    let preferred = match strategy {
        FaceStrategy::WholeCriticalCone | FaceStrategy::LargestRegular => order[0],
        FaceStrategy::LinealityFace => {
            let min_dim = members
                .iter()
                .filter_map(|m| m.face.as_ref().map(|f| f.dimension))
                .min();
            match min_dim {
                Some(d) => *order
                    .iter()
                    .find(|&&i| members[i].face.as_ref().is_some_and(|f| f.dimension == d))
                    .expect("minimum is attained"),
                None => *order.last().expect("nonempty"),
            }
        }
    };
    if members[preferred].subspace.is_regular() {
        return Ok(preferred);
    }
    order
        .into_iter()
        .find(|&i| members[i].subspace.is_regular())
        .ok_or(ScdError::NoRegularSubspace)
}

pub fn select_subspace(bundle: &DerivativeBundle, strategy: FaceStrategy) -> Result<Subspace> {
    select_member(bundle, strategy).map(|i| bundle.members()[i].subspace.clone())
}

/// `x̂ − C_Lᵀ ŷ`, the new iterate for `L ∈ Sp* F(x̂, ŷ)` regular.
pub fn newton_step(point: &GraphPoint, l: &Subspace) -> Result<DVector<f64>> {
    let c = l.c_matrix()?;
    if c.nrows() != point.x.len() {
        return Err(ScdError::DimensionMismatch {
            expected: point.x.len(),
            found: c.nrows(),
        });
    }
    Ok(&point.x - c.transpose() * &point.y)
}

/// The same step computed from the primal side: with `rge(B, A) = L* ∈ Sp F`, solve
/// `A p = −ŷ` and move by `Δx = B p`.
pub fn newton_step_primal(point: &GraphPoint, l: &Subspace) -> Result<DVector<f64>> {
    let primal = l.adjoint();
    let b = primal.upper();
    let a = primal.lower();
    if !primal.is_regular() {
        return Err(ScdError::NotRegular);
    }
    let p = a.lu().solve(&(-&point.y)).ok_or(ScdError::NotRegular)?;
    Ok(&point.x + b * p)
}

/// Runs the Newton iteration from `x0`.
///
/// Only invalid options or dimensions are reported as errors; every other outcome is a
/// [`SolveStatus`] in the returned trace.
pub fn solve(
    ge: &GeneralizedEquation,
    x0: &DVector<f64>,
    opts: &SolverOptions,
    reference: Option<&DVector<f64>>,
) -> Result<NewtonTrace> {
    opts.validate()?;
    ge.check_dim(x0)?;
    if let Some(r) = reference {
        ge.check_dim(r)?;
    }
    let mut trace = NewtonTrace {
        iterations: Vec::new(),
        status: SolveStatus::MaxIterations,
        rate_ratios: Vec::new(),
        eta_exceeded: Vec::new(),
        final_x: x0.clone(),
        final_residual: f64::INFINITY,
    };
    let mut x = x0.clone();
    for k in 0..=opts.max_iter {
        let residual = match natural_residual(ge, &x) {
            Ok(r) => r,
            Err(_) => {
                trace.status = SolveStatus::ApproximationFailed;
                break;
            }
        };
        trace.final_x = x.clone();
        trace.final_residual = residual;
        if residual <= opts.tol_residual {
            trace.status = SolveStatus::Converged;
            break;
        }
        if k == opts.max_iter {
            trace.status = SolveStatus::MaxIterations;
            break;
        }
        let Ok(point) = approximation_step(ge, &x) else {
            trace.status = SolveStatus::ApproximationFailed;
            break;
        };
        let Ok(bundle) = bundle_at(ge, &point, Flavor::Dual) else {
            trace.status = SolveStatus::ApproximationFailed;
            break;
        };
        let l = match select_subspace(&bundle, opts.face_strategy) {
            Ok(l) => l,
            Err(_) => {
                trace.status = SolveStatus::NoRegularSubspace;
                break;
            }
        };
        let next = newton_step(&point, &l).expect("selected subspace is regular");
        let c_norm = operator_norm(&l.c_matrix().expect("selected subspace is regular"));

        let eta = reference.and_then(|xbar| {
            let err = (&x - xbar).norm();
            let dx = (&point.x - xbar).norm_squared();
            (err > 0.0).then(|| (dx + point.y.norm_squared()).sqrt() / err)
        });
        if let (Some(limit), Some(e)) = (opts.eta_check, eta) {
            if e > limit {
                trace.eta_exceeded.push(k);
            }
        }
        if let Some(xbar) = reference {
            let before = (&x - xbar).norm();
            if before > 0.0 {
                trace.rate_ratios.push((&next - xbar).norm() / before);
            }
        }
        trace.iterations.push(IterationRecord {
            x: x.clone(),
            xhat: point.x.clone(),
            yhat: point.y.clone(),
            subspace: l,
            c_norm,
            residual,
            eta,
        });
        x = next;
    }
    Ok(trace)
}
