//! Regularity diagnostics computed from derivative bundles at a single graph point.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScdError};
use crate::generalized_equation::{bundle_at, DerivativeBundle, Flavor, GeneralizedEquation, GraphPoint};
use crate::linalg;
use crate::polyhedral::EPS_ACT;
use crate::subspace::{operator_norm, EPS_RANK};

/// Symmetric-part eigenvalues below `-PSD_TOL` make a matrix indefinite.
pub const PSD_TOL: f64 = 1e-9;
/// A refuting combination must have `σ_min(π₂) ≤ WITNESS_TOL`.
pub const WITNESS_TOL: f64 = 1e-7;
pub const DEFAULT_SAMPLES: usize = 10_000;
/// Jacobians within this (relative) distance of their transpose count as symmetric.
const SYMMETRY_TOL: f64 = 1e-12;

/// A regularity modulus; `+∞` is serialised as `{"inf": true}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModulusRepr", try_from = "ModulusRepr")]
pub enum Modulus {
    Finite(f64),
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ModulusRepr {
    Value(f64),
    Flag { inf: bool },
}

impl From<Modulus> for ModulusRepr {
    fn from(m: Modulus) -> Self {
        match m {
            Modulus::Finite(v) => ModulusRepr::Value(v),
            Modulus::Infinite => ModulusRepr::Flag { inf: true },
        }
    }
}

impl TryFrom<ModulusRepr> for Modulus {
    type Error = String;

    fn try_from(r: ModulusRepr) -> std::result::Result<Self, String> {
        match r {
            ModulusRepr::Value(v) => Ok(Modulus::Finite(v)),
            ModulusRepr::Flag { inf: true } => Ok(Modulus::Infinite),
            ModulusRepr::Flag { inf: false } => Err("finite modulus must be a number".into()),
        }
    }
}

impl Modulus {
    pub fn value(self) -> f64 {
        match self {
            Modulus::Finite(v) => v,
            Modulus::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Modulus::Finite(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    /// Position in the bundle.
    pub id: usize,
    /// Active rows of the face that generated the member, if known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub face: Option<Vec<usize>>,
    pub regular: bool,
    pub c_norm: Option<f64>,
    pub c_psd: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateStatus {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateMethod {
    Pairwise,
    Sampled,
}

/// A convex combination whose lower block is (numerically) singular.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub weights: Vec<f64>,
    pub sigma_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmrCertificate {
    pub status: CertificateStatus,
    pub method: CertificateMethod,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub scd_regular: bool,
    pub scd_reg_modulus: Modulus,
    /// The same value read as a strong-metric-subregularity modulus; only set when the map is
    /// known to be SCD semismooth*.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lsubreg_modulus: Option<f64>,
    pub per_member: Vec<MemberReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub smr_certificate: Option<SmrCertificate>,
    /// Only reported when the caller asserts local maximal hypomonotonicity.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub monotone_strongly_regular: Option<bool>,
    /// Only reported when `∇f` is symmetric, i.e. `f` is a gradient.
    pub tilt_stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tilt_modulus: Option<f64>,
    /// Activity tolerance used when building the critical cone.
    pub activity_tolerance: f64,
    pub notes: Vec<String>,
}

/// Outcome of a PSD-based test.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub positive: bool,
    /// `scd reg` of the bundle on a positive verdict.
    pub modulus: Option<f64>,
    pub reason: Option<String>,
}

/// `⟨C p, p⟩ ≥ 0` for all `p`, tested on the symmetric part.
pub fn is_psd(c: &DMatrix<f64>) -> bool {
    if c.is_empty() {
        return true;
    }
    let sym = (c + c.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().all(|&e| e >= -PSD_TOL)
}

/// SCD regularity of the bundle and `sup ‖C_L‖` over its members.
///
/// The primal bundle gives the same verdict and modulus since `C_{L*} = C_Lᵀ`.
pub fn scd_regularity(bundle: &DerivativeBundle) -> Result<RegularityReport> {
    if bundle.is_empty() {
        return Err(ScdError::EmptyBundle);
    }
    let mut per_member = Vec::with_capacity(bundle.len());
    let mut modulus = Modulus::Finite(0.0);
    for (id, m) in bundle.members().iter().enumerate() {
        let face = m.face.as_ref().map(|f| f.active.clone());
        match m.subspace.c_matrix() {
            Ok(c) => {
                let norm = operator_norm(&c);
                if let Modulus::Finite(v) = modulus {
                    modulus = Modulus::Finite(v.max(norm));
                }
                per_member.push(MemberReport {
                    id,
                    face,
                    regular: true,
                    c_norm: Some(norm),
                    c_psd: Some(is_psd(&c)),
                });
            }
            Err(_) => {
                modulus = Modulus::Infinite;
                per_member.push(MemberReport {
                    id,
                    face,
                    regular: false,
                    c_norm: None,
                    c_psd: None,
                });
            }
        }
    }
    Ok(RegularityReport {
        scd_regular: modulus.is_finite(),
        scd_reg_modulus: modulus,
        lsubreg_modulus: None,
        per_member,
        smr_certificate: None,
        monotone_strongly_regular: None,
        tilt_stable: None,
        tilt_modulus: None,
        activity_tolerance: EPS_ACT,
        notes: Vec::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubregularityModulus {
    pub value: f64,
    /// True when the value is also the strong metric subregularity modulus around the point.
    pub is_lsubreg: bool,
}

pub fn subregularity_modulus(
    bundle: &DerivativeBundle,
    semismooth_star_assumed: bool,
) -> Result<SubregularityModulus> {
    match scd_regularity(bundle)?.scd_reg_modulus {
        Modulus::Finite(value) => Ok(SubregularityModulus {
            value,
            is_lsubreg: semismooth_star_assumed,
        }),
        Modulus::Infinite => Err(ScdError::NotRegular),
    }
}

fn lower_block(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.ncols();
    z.rows(n, n).into_owned()
}

fn combination(blocks: &[DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let mut acc = DMatrix::zeros(blocks[0].nrows(), blocks[0].ncols());
    for (b, &w) in blocks.iter().zip(weights) {
        acc += b * w;
    }
    acc
}

fn witness(blocks: &[DMatrix<f64>], weights: Vec<f64>) -> Option<Witness> {
    let sigma_min = linalg::min_singular_value(&combination(blocks, &weights));
    (sigma_min <= WITNESS_TOL).then_some(Witness { weights, sigma_min })
}

fn refuted(method: CertificateMethod, samples: usize, w: Witness) -> SmrCertificate {
    SmrCertificate {
        status: CertificateStatus::Refuted,
        method,
        samples,
        witness: Some(w),
    }
}

/// Parameters `t ∈ (0, 1)` with `t A + (1 − t) B` singular, for `B` nonsingular.
///
/// `tA + (1−t)B = B (I + t M)` with `M = B⁻¹(A − B)`, which is singular exactly when
/// `μ = −1/t` is an eigenvalue of `M`.
fn pencil_roots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let Some(m) = b.clone().lu().solve(&(a - b)) else {
        return Vec::new();
    };
    let mut roots: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|mu| mu.im.abs() <= 1e-6 * mu.re.abs().max(1.0) && mu.re < -1.0)
        .map(|mu| -1.0 / mu.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

/// Nonsingularity of the lower blocks over the convex hull of the `Z_i`.
///
/// Vertices and pairs are decided exactly; with three or more matrices random convex
/// combinations (seeded) are searched for a determinant sign change, and the outcome is at
/// best `Inconclusive`. Every refutation carries a re-verified witness.
pub fn strong_regularity_certificate(
    matrices: &[DMatrix<f64>],
    samples: usize,
    seed: u64,
) -> Result<SmrCertificate> {
    let Some(first) = matrices.first() else {
        return Err(ScdError::EmptyBundle);
    };
    let n = first.ncols();
    for z in matrices {
        if z.ncols() != n {
            return Err(ScdError::DimensionMismatch {
                expected: n,
                found: z.ncols(),
            });
        }
        if z.nrows() != 2 * n {
            return Err(ScdError::DimensionMismatch {
                expected: 2 * n,
                found: z.nrows(),
            });
        }
    }
    let m = matrices.len();
    let blocks: Vec<DMatrix<f64>> = matrices.iter().map(lower_block).collect();
    let unit = |i: usize| {
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        w
    };

    for (i, (z, b)) in matrices.iter().zip(&blocks).enumerate() {
        let scale = operator_norm(z).max(1.0);
        if linalg::min_singular_value(b) <= EPS_RANK * scale {
            let sigma_min = linalg::min_singular_value(b);
            return Ok(refuted(
                CertificateMethod::Pairwise,
                0,
                Witness {
                    weights: unit(i),
                    sigma_min,
                },
            ));
        }
    }

    for i in 0..m {
        for j in (i + 1)..m {
            for t in pencil_roots(&blocks[i], &blocks[j]) {
                let mut w = vec![0.0; m];
                w[i] = t;
                w[j] = 1.0 - t;
                if let Some(wit) = witness(&blocks, w) {
                    return Ok(refuted(CertificateMethod::Pairwise, 0, wit));
                }
            }
        }
    }

    if m <= 2 {
        return Ok(SmrCertificate {
            status: CertificateStatus::Certified,
            method: CertificateMethod::Pairwise,
            samples: 0,
            witness: None,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = unit(0);
    let base_sign = blocks[0].determinant().signum();
    let det_at = |w: &[f64]| combination(&blocks, w).determinant();
    for k in 0..samples {
        let mut w: Vec<f64> = (0..m)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        if det_at(&w).signum() == base_sign {
            continue;
        }
        // bisect on the segment from the first vertex to the sample
        let point = |s: f64| -> Vec<f64> {
            base.iter()
                .zip(&w)
                .map(|(b, x)| (1.0 - s) * b + s * x)
                .collect()
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if det_at(&point(mid)).signum() == base_sign {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        if let Some(wit) = witness(&blocks, point(0.5 * (lo + hi))) {
            return Ok(refuted(CertificateMethod::Sampled, k + 1, wit));
        }
    }
    Ok(SmrCertificate {
        status: CertificateStatus::Inconclusive,
        method: CertificateMethod::Sampled,
        samples,
        witness: None,
    })
}

/// `Z = (B; I − B + ∇f(x) B)` for every face of the critical cone at the point, with `B` the
/// projection onto `F − F`.
///
/// These are the generalized Jacobians of `u ↦ (P_C(u), f(P_C(u)) + u − P_C(u))` at
/// `u = x + v`, all sharing the normalisation `π₁ = B`.
pub fn normalized_generators(
    ge: &GeneralizedEquation,
    point: &GraphPoint,
) -> Result<Vec<DMatrix<f64>>> {
    let k = ge.set().critical_cone(&point.x, &point.v)?;
    let n = ge.n();
    let jac = ge.smooth().jacobian(&point.x);
    let id = DMatrix::<f64>::identity(n, n);
    Ok(k.faces()?
        .iter()
        .map(|f| {
            let b = f.span_projection();
            let lower = &id - &b + &jac * &b;
            linalg::vstack(&b, &lower)
        })
        .collect())
}

fn require_primal(bundle: &DerivativeBundle) -> Result<()> {
    if bundle.flavor != Flavor::Primal {
        return Err(ScdError::InvalidInput(
            "this test needs the primal bundle".into(),
        ));
    }
    Ok(())
}

fn psd_verdict(bundle: &DerivativeBundle) -> Result<Verdict> {
    let report = scd_regularity(bundle)?;
    if !report.scd_regular {
        return Ok(Verdict {
            positive: false,
            modulus: None,
            reason: Some("not SCD regular".into()),
        });
    }
    if let Some(m) = report.per_member.iter().find(|m| m.c_psd == Some(false)) {
        return Ok(Verdict {
            positive: false,
            modulus: None,
            reason: Some(format!("C_L of member {} is not positive semidefinite", m.id)),
        });
    }
    Ok(Verdict {
        positive: true,
        modulus: Some(report.scd_reg_modulus.value()),
        reason: None,
    })
}

/// Strong metric regularity test for locally maximally hypomonotone maps: SCD regular and
/// every `C_L` of the primal bundle positive semidefinite. Hypomonotonicity is not checked.
pub fn monotone_strong_regularity(bundle: &DerivativeBundle) -> Result<Verdict> {
    require_primal(bundle)?;
    psd_verdict(bundle)
}

/// Tilt stability for `q = φ + δ_C` from the primal bundle of `∂q = ∇φ + N_C` at `(x̄, 0)`;
/// on a positive verdict the tilt modulus is the scd-reg modulus.
pub fn tilt_stability(bundle: &DerivativeBundle) -> Result<Verdict> {
    require_primal(bundle)?;
    psd_verdict(bundle)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalyzeOptions {
    pub samples: usize,
    pub seed: u64,
    /// Caller asserts local maximal hypomonotonicity of the map.
    pub assume_hypomonotone: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0,
            assume_hypomonotone: false,
        }
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SYMMETRY_TOL * scale
}

/// Full report at a graph point: SCD regularity from the dual bundle, the subregularity
/// modulus, the convex-hull certificate and the PSD tests from the primal bundle.
pub fn analyze(
    ge: &GeneralizedEquation,
    point: &GraphPoint,
    opts: &AnalyzeOptions,
) -> Result<RegularityReport> {
    let dual = bundle_at(ge, point, Flavor::Dual)?;
    let primal = bundle_at(ge, point, Flavor::Primal)?;
    let mut report = scd_regularity(&dual)?;

    let primal_report = scd_regularity(&primal)?;
    let agree = match (report.scd_reg_modulus, primal_report.scd_reg_modulus) {
        (Modulus::Finite(a), Modulus::Finite(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
        (Modulus::Infinite, Modulus::Infinite) => true,
        _ => false,
    };
    if !agree {
        report
            .notes
            .push("primal and dual bundles disagree on the scd-reg modulus".into());
    }

    // polyhedral C plus smooth f is SCD semismooth*
    if let Ok(sub) = subregularity_modulus(&dual, true) {
        report.lsubreg_modulus = sub.is_lsubreg.then_some(sub.value);
        report
            .notes
            .push("map is SCD semismooth*: scd-reg modulus equals the lsubreg modulus".into());
    }

    let generators = normalized_generators(ge, point)?;
    report.smr_certificate = Some(strong_regularity_certificate(
        &generators,
        opts.samples,
        opts.seed,
    )?);

    if opts.assume_hypomonotone {
        let v = monotone_strong_regularity(&primal)?;
        report.monotone_strongly_regular = Some(v.positive);
        report
            .notes
            .push("local maximal hypomonotonicity asserted by the caller".into());
        if let Some(r) = v.reason {
            report.notes.push(format!("monotone test: {r}"));
        }
    }

    if is_symmetric(&ge.smooth().jacobian(&point.x)) && point.y.norm() <= EPS_ACT {
        let v = tilt_stability(&primal)?;
        report.tilt_stable = Some(v.positive);
        report.tilt_modulus = v.modulus;
        if let Some(r) = v.reason {
            report.notes.push(format!("tilt test: {r}"));
        }
    } else {
        report
            .notes
            .push("tilt test skipped: needs a gradient map and y = 0".into());
    }
    Ok(report)
}
