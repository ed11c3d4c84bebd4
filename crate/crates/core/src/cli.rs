//! `scd` command-line front end.
//!
//! Exit codes: 0 success, 1 input or usage error, 2 solver did not converge,
//! 3 certificate refuted under `--expect-certified`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ScdError};
use crate::generalized_equation::{graph_point, GeneralizedEquation, ProblemJson};
use crate::linalg;
use crate::newton::{self, FaceStrategy, SolverOptions};
use crate::regularity::{self, AnalyzeOptions, CertificateStatus, DEFAULT_SAMPLES};
use crate::subspace::{Subspace, SubspaceJson, TransformMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_REFUTED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "scd", version, about = "Semismooth* Newton solver and regularity diagnostics for f + N_C")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the Newton iteration and print the trace.
    Solve(SolveArgs),
    /// Regularity report at a graph point.
    Analyze(AnalyzeArgs),
    /// Faces of the critical cone at a graph point with their subspaces.
    Faces(PointArgs),
}

#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Problem JSON file.
    #[arg(long, value_name = "PATH")]
    pub problem: PathBuf,
    /// Overrides the problem's y_target.
    #[arg(long, value_name = "CSV", value_parser = parse_csv_arg, allow_hyphen_values = true)]
    pub y_target: Option<Csv>,
    /// Write JSON here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    #[arg(long, value_name = "CSV", value_parser = parse_csv_arg, allow_hyphen_values = true)]
    pub x0: Csv,
    /// Optional known solution; enables the error ratios in the trace.
    #[arg(long, value_name = "CSV", value_parser = parse_csv_arg, allow_hyphen_values = true)]
    pub reference: Option<Csv>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 50)]
    pub max_iter: usize,
    /// whole-critical-cone, lineality-face or largest-regular.
    #[arg(long, default_value = "whole-critical-cone", value_parser = parse_strategy)]
    pub face_strategy: FaceStrategy,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[command(flatten)]
    pub common: ProblemArgs,
    #[arg(long, value_name = "CSV", value_parser = parse_csv_arg, allow_hyphen_values = true)]
    pub x: Csv,
    /// Normal vector at x; zero when omitted.
    #[arg(long, value_name = "CSV", value_parser = parse_csv_arg, allow_hyphen_values = true)]
    pub v: Option<Csv>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub point: PointArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random convex combinations tried by the certificate.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Exit with code 3 when the certificate is refuted.
    #[arg(long)]
    pub expect_certified: bool,
    /// Assert local maximal hypomonotonicity and run the monotone test.
    #[arg(long)]
    pub assume_hypomonotone: bool,
}

fn parse_csv(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("{t:?}: {e}"))
                .and_then(|x| {
                    if x.is_finite() {
                        Ok(x)
                    } else {
                        Err(format!("{t:?} is not finite"))
                    }
                })
        })
        .collect()
}

/// A comma-separated vector argument.
#[derive(Clone, Debug, PartialEq)]
pub struct Csv(pub Vec<f64>);

fn parse_csv_arg(s: &str) -> std::result::Result<Csv, String> {
    parse_csv(s).map(Csv)
}

fn parse_strategy(s: &str) -> std::result::Result<FaceStrategy, String> {
    s.parse().map_err(|e: ScdError| e.to_string())
}

/// One face of the critical cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaceJson {
    pub active: Vec<usize>,
    pub dimension: usize,
    pub lineality: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
    /// Orthonormal basis of `F − F`, one vector per entry.
    pub span: Vec<Vec<f64>>,
    /// `rge(B, I − B)`.
    pub normal_cone_subspace: SubspaceJson,
    /// Member of the dual bundle of the full problem.
    pub dual_member: SubspaceJson,
    pub c_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacesJson {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub faces: Vec<FaceJson>,
}

fn load_problem(args: &ProblemArgs) -> Result<GeneralizedEquation> {
    let text = fs::read_to_string(&args.problem)?;
    let problem: ProblemJson = serde_json::from_str(&text)?;
    let ge = problem.into_problem()?;
    match &args.y_target {
        Some(y) => ge.with_y_target(DVector::from_column_slice(&y.0)),
        None => Ok(ge),
    }
}

fn vector(ge: &GeneralizedEquation, xs: &[f64]) -> Result<DVector<f64>> {
    let v = DVector::from_column_slice(xs);
    ge.check_dim(&v)?;
    Ok(v)
}

fn emit<T: Serialize>(value: &T, output: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match output {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<i32> {
    let ge = load_problem(&args.common)?;
    let x0 = vector(&ge, &args.x0.0)?;
    let reference = args
        .reference
        .as_ref()
        .map(|r| vector(&ge, &r.0))
        .transpose()?;
    let opts = SolverOptions {
        tol_residual: args.tol,
        max_iter: args.max_iter,
        face_strategy: args.face_strategy,
        eta_check: None,
    };
    let trace = newton::solve(&ge, &x0, &opts, reference.as_ref())?;
    emit(&trace.to_json(), args.common.output.as_deref())?;
    Ok(if trace.converged() {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}

fn point_of(ge: &GeneralizedEquation, args: &PointArgs) -> Result<(DVector<f64>, DVector<f64>)> {
    let x = vector(ge, &args.x.0)?;
    let v = match &args.v {
        Some(v) => vector(ge, &v.0)?,
        None => DVector::zeros(ge.n()),
    };
    Ok((x, v))
}

fn analyze(args: &AnalyzeArgs) -> Result<i32> {
    let ge = load_problem(&args.point.common)?;
    let (x, v) = point_of(&ge, &args.point)?;
    let point = graph_point(&ge, &x, &v)?;
    let opts = AnalyzeOptions {
        samples: args.samples,
        seed: args.seed,
        assume_hypomonotone: args.assume_hypomonotone,
    };
    let report = regularity::analyze(&ge, &point, &opts)?;
    emit(&report, args.point.common.output.as_deref())?;
    let refuted = report
        .smr_certificate
        .as_ref()
        .is_some_and(|c| c.status == CertificateStatus::Refuted);
    Ok(if args.expect_certified && refuted {
        EXIT_REFUTED
    } else {
        EXIT_OK
    })
}

fn faces(args: &PointArgs) -> Result<i32> {
    let ge = load_problem(&args.common)?;
    let (x, v) = point_of(&ge, args)?;
    graph_point(&ge, &x, &v)?;
    let cone = ge.set().critical_cone(&x, &v)?;
    let shear = TransformMatrix::shear(&ge.smooth().jacobian(&x).transpose())?;
    let cols = |m: &nalgebra::DMatrix<f64>| {
        m.column_iter()
            .map(|c| c.iter().copied().collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let vecs = |vs: &[DVector<f64>]| {
        vs.iter()
            .map(|c| c.iter().copied().collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    let mut out = Vec::new();
    for face in cone.faces()? {
        let l: Subspace = face.normal_cone_subspace();
        let dual = l.transform(&shear)?;
        out.push(FaceJson {
            active: face.active.iter().map(|&i| cone.labels()[i]).collect(),
            dimension: face.dimension(),
            lineality: vecs(&face.generators.lineality),
            rays: vecs(&face.generators.rays),
            span: cols(&face.span_basis),
            normal_cone_subspace: (&l).into(),
            c_matrix: dual.c_matrix().ok().map(|c| linalg::matrix_to_rows(&c)),
            dual_member: (&dual).into(),
        });
    }
    let report = FacesJson {
        x: x.iter().copied().collect(),
        v: v.iter().copied().collect(),
        faces: out,
    };
    emit(&report, args.common.output.as_deref())?;
    Ok(EXIT_OK)
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => solve(args),
        Command::Analyze(args) => analyze(args),
        Command::Faces(args) => faces(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
