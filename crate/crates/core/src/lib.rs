//! Subspace-containing derivatives for generalized equations `0 ∈ f(x) + N_C(x) − y`
//! with a polyhedral set `C`: subspace calculus on `Z_n`, derivative bundles built from the
//! faces of critical cones, a semismooth* Newton solver and point-based regularity tests.

pub mod cli;
pub mod error;
pub mod generalized_equation;
pub mod linalg;
pub mod newton;
pub mod polyhedral;
mod qp;
pub mod regularity;
pub mod subspace;

pub use error::{Result, ScdError};
pub use generalized_equation::{
    bundle_at, graph_point, BuiltinMap, BundleMember, DerivativeBundle, FaceTag, Flavor,
    GeneralizedEquation, GraphPoint, ProblemJson, SmoothMap,
};
pub use newton::{solve, FaceStrategy, NewtonTrace, SolveStatus, SolverOptions};
pub use polyhedral::{sp_star_normal_cone, PolyhedralCone, PolyhedralSet};
pub use regularity::{analyze, RegularityReport};
pub use subspace::{Subspace, TransformMatrix};
