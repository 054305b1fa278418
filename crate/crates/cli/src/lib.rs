//! Command-line front end for `toric-kahler`.
//!
//! [`parse_config`] turns an argument vector into a [`RunConfig`],
//! [`run`] executes it and returns the rendered report together with the
//! exit status, and [`emit`] writes the report to `--out` or stdout.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use toric_kahler::curvature::{
    cone_angle, curvature_sample, fit_affine, scalar_curvature, ExtremalFit, GridSpec, QuadratureSpec, Route,
    EXTREMAL_TOL,
};
use toric_kahler::einstein::{
    derdzinski_test, family_potential, family_report, taub_nut_limit_potential, EinsteinPath,
};
use toric_kahler::polytope::{
    beta_and_kernel, interior_grid, make_labeled_simplex, orbifold_group_order, FaceDescriptor, LabeledPolytope,
    PolytopeJson,
};
use toric_kahler::potential::{
    canonical_potential, extremal_simplex_potential, verify_compatibility, CompatibilityPlan, PotentialExpr,
};
use toric_kahler::Error;

/// Relative Derdzinski spread accepted as constant on the analytic path.
pub const EINSTEIN_TOL: f64 = 1e-8;
/// Same, when `S` is differentiated numerically.
pub const EINSTEIN_FD_TOL: f64 = 1e-4;
/// Accepted deviation of `S*` from its closed form.
pub const SSTAR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// The input violates a condition the theory requires (not a metric,
    /// not extremal where needed, failed compatibility, invalid labels).
    Validation = 1,
    Usage = 2,
    Numerical = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn of(e: &Error) -> Self {
        match e {
            Error::Parse(_) | Error::EmptyGrid { .. } => ExitStatus::Usage,
            Error::Singular(_) | Error::Overflow | Error::StepTooSmall { .. } => ExitStatus::Numerical,
            _ => ExitStatus::Validation,
        }
    }
}

/// A failure before any report exists.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub status: ExitStatus,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { status: ExitStatus::Usage, message: message.into() }
    }

    fn validation(message: impl Into<String>) -> Self {
        Self { status: ExitStatus::Validation, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { status: ExitStatus::of(&e), message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteChoice {
    Analytic,
    Fd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Describe,
    Curvature,
    Verify,
    Einstein,
    Cone,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolytopeSource {
    /// `--simplex n m1,…,m_{n+1}`: the labeled simplex at unit scale.
    Simplex { n: usize, labels: Vec<f64> },
    /// A polytope JSON file, or a `describe` report containing one.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSource {
    Canonical,
    Extremal,
    /// The `(1,1,m)` family; carries its own triangle.
    Family(f64),
    /// The `m → ∞` limit; carries the standard triangle.
    TaubNut,
    File(PathBuf),
}

impl PotentialSource {
    fn implies_polytope(&self) -> bool {
        matches!(self, PotentialSource::Family(_) | PotentialSource::TaubNut)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub polytope: Option<PolytopeSource>,
    pub potential: Option<PotentialSource>,
    pub m: Option<f64>,
    pub grid: usize,
    pub margin: f64,
    pub route: RouteChoice,
    pub out: Option<PathBuf>,
    pub format: Format,
}

#[derive(Parser, Debug)]
#[command(name = "toric", version, about = "Toric Kähler orbifold metrics on labeled polytopes")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Vertices, labels, orbifold orders of every face, β and its kernel.
    Describe {
        #[command(flatten)]
        polytope: PolytopeArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Scalar curvature samples on an interior grid and an affine fit.
    Curvature {
        #[command(flatten)]
        polytope: PolytopeArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        route: RouteArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sample-based compatibility check of a potential with the labels.
    Verify {
        #[command(flatten)]
        polytope: PolytopeArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Derdzinski test and conformal scalar curvature.
    Einstein {
        /// Member of the (1,1,m) family; excludes --simplex/--polytope/--potential.
        #[arg(long)]
        m: Option<f64>,
        #[command(flatten)]
        polytope: PolytopeArgs,
        #[command(flatten)]
        potential: PotentialArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        route: RouteArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Cone angle of the normal model with label m.
    Cone {
        #[arg(long)]
        m: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Debug)]
struct PolytopeArgs {
    /// Labeled simplex: dimension and comma-separated labels.
    #[arg(long, num_args = 2, value_names = ["N", "LABELS"], conflicts_with = "polytope")]
    simplex: Option<Vec<String>>,
    /// Polytope JSON file (or a describe report).
    #[arg(long, value_name = "FILE")]
    polytope: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PotentialArgs {
    /// canonical | extremal | family:M | taubnut | FILE.json
    #[arg(long, value_name = "NAME|FILE")]
    potential: Option<String>,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Grid cells per axis of the bounding box.
    #[arg(long, default_value_t = 64)]
    grid: usize,
    /// Minimum facet value of grid points.
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
}

#[derive(Args, Debug)]
struct RouteArgs {
    #[arg(long, value_enum, default_value_t = RouteChoice::Analytic)]
    route: RouteChoice,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

/// Outcome of argument parsing: a config, or text clap wants printed
/// (help, version) with the status to exit with.
#[derive(Debug)]
pub enum Parsed {
    Run(RunConfig),
    Exit { status: ExitStatus, text: String },
}

fn parse_simplex(raw: &[String]) -> Result<PolytopeSource, CliError> {
    let n: usize = raw[0].parse().map_err(|_| CliError::usage(format!("--simplex: bad dimension '{}'", raw[0])))?;
    let labels = raw[1]
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::usage(format!("--simplex: bad label list '{}'", raw[1])))?;
    if n == 0 || labels.len() != n + 1 {
        return Err(CliError::usage(format!("--simplex {n} needs {} labels, got {}", n + 1, labels.len())));
    }
    Ok(PolytopeSource::Simplex { n, labels })
}

fn check_m(m: f64, what: &str) -> Result<f64, CliError> {
    if m.is_finite() && m > 0.0 {
        Ok(m)
    } else {
        Err(CliError::validation(format!("{what} must be a positive real, got {m}")))
    }
}

fn parse_potential(raw: &str) -> Result<PotentialSource, CliError> {
    Ok(match raw {
        "canonical" => PotentialSource::Canonical,
        "extremal" => PotentialSource::Extremal,
        "taubnut" => PotentialSource::TaubNut,
        _ => match raw.strip_prefix("family:") {
            Some(m) => {
                let m = m.parse().map_err(|_| CliError::usage(format!("--potential: bad family parameter '{m}'")))?;
                PotentialSource::Family(check_m(m, "family parameter")?)
            }
            None => PotentialSource::File(PathBuf::from(raw)),
        },
    })
}

fn polytope_source(a: &PolytopeArgs) -> Result<Option<PolytopeSource>, CliError> {
    match (&a.simplex, &a.polytope) {
        (Some(s), _) => parse_simplex(s).map(Some),
        (None, Some(f)) => Ok(Some(PolytopeSource::File(f.clone()))),
        (None, None) => Ok(None),
    }
}

/// Polytope and potential for commands that evaluate a potential.
fn domain_sources(
    poly: &PolytopeArgs,
    pot: &PotentialArgs,
) -> Result<(Option<PolytopeSource>, PotentialSource), CliError> {
    let potential = pot.potential.as_deref().map(parse_potential).transpose()?;
    let Some(potential) = potential else {
        return Err(CliError::usage("missing --potential"));
    };
    let polytope = polytope_source(poly)?;
    match (&polytope, potential.implies_polytope()) {
        (Some(_), true) => Err(CliError::usage("this potential defines its own polytope; drop --simplex/--polytope")),
        (None, false) => Err(CliError::usage("missing polytope: give --simplex or --polytope")),
        _ => Ok((polytope, potential)),
    }
}

fn check_grid(g: &GridArgs) -> Result<(), CliError> {
    if g.grid == 0 {
        return Err(CliError::usage("--grid must be at least 1"));
    }
    if !(g.margin.is_finite() && g.margin > 0.0) {
        return Err(CliError::usage(format!("--margin must be a positive real, got {}", g.margin)));
    }
    Ok(())
}

/// Parses the argument vector (including the program name).
pub fn parse_config<I, T>(argv: I) -> Result<Parsed, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let status = if e.use_stderr() { ExitStatus::Usage } else { ExitStatus::Success };
            if status == ExitStatus::Success {
                return Ok(Parsed::Exit { status, text: e.to_string() });
            }
            return Err(CliError::usage(e.to_string()));
        }
    };
    let mut cfg = RunConfig {
        command: Command::Describe,
        polytope: None,
        potential: None,
        m: None,
        grid: 64,
        margin: 0.05,
        route: RouteChoice::Analytic,
        out: None,
        format: Format::Json,
    };
    let output = match cli.command {
        Cmd::Describe { polytope, output } => {
            cfg.polytope = Some(
                polytope_source(&polytope)?
                    .ok_or_else(|| CliError::usage("missing polytope: give --simplex or --polytope"))?,
            );
            output
        }
        Cmd::Curvature { polytope, potential, grid, route, output } => {
            cfg.command = Command::Curvature;
            check_grid(&grid)?;
            let (p, g) = domain_sources(&polytope, &potential)?;
            (cfg.polytope, cfg.potential) = (p, Some(g));
            (cfg.grid, cfg.margin, cfg.route) = (grid.grid, grid.margin, route.route);
            output
        }
        Cmd::Verify { polytope, potential, grid, output } => {
            cfg.command = Command::Verify;
            check_grid(&grid)?;
            let (p, g) = domain_sources(&polytope, &potential)?;
            (cfg.polytope, cfg.potential) = (p, Some(g));
            (cfg.grid, cfg.margin) = (grid.grid, grid.margin);
            output
        }
        Cmd::Einstein { m, polytope, potential, grid, route, output } => {
            cfg.command = Command::Einstein;
            check_grid(&grid)?;
            match m {
                Some(m) => {
                    if polytope.simplex.is_some() || polytope.polytope.is_some() || potential.potential.is_some() {
                        return Err(CliError::usage(
                            "--m selects the family; it excludes --simplex/--polytope/--potential",
                        ));
                    }
                    cfg.m = Some(check_m(m, "--m")?);
                }
                None => {
                    let (p, g) = domain_sources(&polytope, &potential)?;
                    (cfg.polytope, cfg.potential) = (p, Some(g));
                }
            }
            (cfg.grid, cfg.margin, cfg.route) = (grid.grid, grid.margin, route.route);
            output
        }
        Cmd::Cone { m, output } => {
            cfg.command = Command::Cone;
            cfg.m = Some(check_m(m, "--m")?);
            output
        }
    };
    (cfg.out, cfg.format) = (output.out, output.format);
    Ok(Parsed::Run(cfg))
}

/// Rendered report, the status to exit with, and human-readable notes for
/// stderr.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub status: ExitStatus,
    pub report: Option<String>,
    pub messages: Vec<String>,
}

impl RunResult {
    fn failed(e: CliError) -> Self {
        Self { status: e.status, report: None, messages: vec![e.message] }
    }
}

fn load_polytope(src: &PolytopeSource) -> Result<LabeledPolytope, CliError> {
    match src {
        PolytopeSource::Simplex { n, labels } => Ok(make_labeled_simplex(*n, labels, 1.0)?),
        PolytopeSource::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            let value: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::from(Error::Parse(e.to_string())))?;
            // a describe report carries the polytope under "polytope"
            let inner = value.get("polytope").cloned().unwrap_or(value);
            let json: PolytopeJson =
                serde_json::from_value(inner).map_err(|e| CliError::from(Error::Parse(e.to_string())))?;
            Ok(LabeledPolytope::try_from(json)?)
        }
    }
}

fn load_domain(cfg: &RunConfig) -> Result<(LabeledPolytope, PotentialExpr), CliError> {
    let source = cfg.potential.as_ref().expect("potential source checked at parse time");
    let (p, g) = match source {
        PotentialSource::Family(m) => {
            let g = family_potential(*m)?;
            (g.domain().expect("family potential has a domain").clone(), g)
        }
        PotentialSource::TaubNut => {
            let g = taub_nut_limit_potential();
            (g.domain().expect("limit potential has a domain").clone(), g)
        }
        other => {
            let p = load_polytope(cfg.polytope.as_ref().expect("polytope source checked at parse time"))?;
            let g = match other {
                PotentialSource::Canonical => canonical_potential(&p),
                PotentialSource::Extremal => extremal_simplex_potential(&p)?,
                PotentialSource::File(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
                    PotentialExpr::from_json(&text)?.with_domain(&p)
                }
                _ => unreachable!(),
            };
            (p, g)
        }
    };
    if g.dim() != p.dim() {
        return Err(CliError::validation(format!(
            "potential has dimension {} but the polytope has dimension {}",
            g.dim(),
            p.dim()
        )));
    }
    Ok((p, g))
}

/// Shortest representation that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_header(n: usize, tail: &[&str]) -> String {
    let mut cols: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    cols.extend(tail.iter().map(|s| s.to_string()));
    cols.join(",") + "\n"
}

fn csv_row(x: &[f64], tail: &[f64]) -> String {
    x.iter().chain(tail).map(|&v| num(v)).collect::<Vec<_>>().join(",") + "\n"
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

#[derive(Serialize)]
struct FacetRow {
    index: usize,
    normal: Vec<i64>,
    label: f64,
    offset: f64,
    order: Option<u64>,
}

#[derive(Serialize)]
struct VertexRow {
    index: usize,
    point: Vec<f64>,
    facets: Vec<usize>,
    order: Option<u64>,
}

#[derive(Serialize)]
struct FaceRow {
    facets: Vec<usize>,
    dim: usize,
    order: Option<u64>,
}

#[derive(Serialize)]
struct DescribeReport {
    dim: usize,
    integral: bool,
    facets: Vec<FacetRow>,
    vertices: Vec<VertexRow>,
    faces: Vec<FaceRow>,
    beta: Option<Vec<Vec<i64>>>,
    kernel_basis: Option<Vec<Vec<i64>>>,
    polytope: PolytopeJson,
}

fn describe(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let p = load_polytope(cfg.polytope.as_ref().expect("checked at parse time"))?;
    let integral = p.all_integral();
    let order = |facets: &BTreeSet<usize>| -> Result<Option<u64>, CliError> {
        if !integral {
            return Ok(None);
        }
        Ok(Some(orbifold_group_order(&p, &FaceDescriptor::from_facets(facets.iter().copied()))?))
    };

    let mut facets = Vec::new();
    for (index, f) in p.facets().iter().enumerate() {
        let o = order(&BTreeSet::from([index]))?;
        facets.push(FacetRow { index, normal: f.normal().to_vec(), label: f.label(), offset: f.offset(), order: o });
    }
    let mut vertices = Vec::new();
    let mut face_sets: BTreeSet<Vec<usize>> = BTreeSet::new();
    for (index, v) in p.vertices().iter().enumerate() {
        vertices.push(VertexRow {
            index,
            point: v.point.clone(),
            facets: v.face.active.iter().copied().collect(),
            order: order(&v.face.active)?,
        });
        // every nonempty subset of a vertex's facets is a face (simplicity)
        let active: Vec<usize> = v.face.active.iter().copied().collect();
        for mask in 1u64..(1 << active.len()) {
            face_sets.insert((0..active.len()).filter(|i| mask & (1 << i) != 0).map(|i| active[i]).collect());
        }
    }
    let mut faces: Vec<Vec<usize>> = face_sets.into_iter().collect();
    faces.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let faces = faces
        .into_iter()
        .map(|f| {
            let set: BTreeSet<usize> = f.iter().copied().collect();
            Ok(FaceRow { dim: p.dim() - f.len(), order: order(&set)?, facets: f })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let (beta, kernel_basis) = if integral {
        let rep = beta_and_kernel(&p)?;
        (Some(rep.beta.to_rows()), Some(rep.kernel_basis))
    } else {
        (None, None)
    };
    let mut messages = vec![format!("{} facets, {} vertices", facets.len(), vertices.len())];
    if !integral {
        messages.push("labels are not all integers: orbifold orders and β are omitted".into());
    }

    let report = match cfg.format {
        Format::Json => json(&DescribeReport {
            dim: p.dim(),
            integral,
            facets,
            vertices,
            faces,
            beta,
            kernel_basis,
            polytope: PolytopeJson::from(&p),
        }),
        Format::Csv => {
            let mut out = csv_header(p.dim(), &["facets", "order"]).replacen("x_1", "vertex,x_1", 1);
            for v in &vertices {
                let coords: Vec<String> = v.point.iter().map(|&c| num(c)).collect();
                let fs: Vec<String> = v.facets.iter().map(|f| f.to_string()).collect();
                let o = v.order.map_or(String::new(), |o| o.to_string());
                out += &format!("{},{},{},{}\n", v.index, coords.join(","), fs.join(";"), o);
            }
            out
        }
    };
    Ok(RunResult { status: ExitStatus::Success, report: Some(report), messages })
}

#[derive(Serialize)]
struct SampleRow {
    x: Vec<f64>,
    s_compact: f64,
    s_log: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_fd: Option<f64>,
    det_g: f64,
}

#[derive(Serialize)]
struct FitRow {
    constant: f64,
    xi: Vec<f64>,
    residual_max: f64,
    residual_rms: f64,
    verdict: &'static str,
}

impl From<&ExtremalFit> for FitRow {
    fn from(f: &ExtremalFit) -> Self {
        Self {
            constant: f.constant,
            xi: f.xi.clone(),
            residual_max: f.residual_max,
            residual_rms: f.residual_rms,
            verdict: if f.extremal { "extremal" } else { "not extremal" },
        }
    }
}

#[derive(Serialize)]
struct CurvatureReport {
    route: RouteChoice,
    grid: GridSpec,
    samples: Vec<SampleRow>,
    fit: FitRow,
}

fn curvature(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let (p, g) = load_domain(cfg)?;
    let grid = GridSpec { resolution: cfg.grid, margin: cfg.margin };
    let points = interior_grid(&p, grid.resolution, grid.margin)?;
    let mut samples = Vec::with_capacity(points.len());
    for x in &points {
        let c = curvature_sample(&g, x)?;
        let s_fd = match cfg.route {
            RouteChoice::Fd => Some(scalar_curvature(&g, x, Route::Fd)?),
            RouteChoice::Analytic => None,
        };
        samples.push(SampleRow { x: x.clone(), s_compact: c.s_compact, s_log: c.s_log, s_fd, det_g: c.det_g });
    }
    let values: Vec<f64> = samples.iter().map(|s| s.s_fd.unwrap_or(s.s_compact)).collect();
    let tol = match cfg.route {
        RouteChoice::Analytic => EXTREMAL_TOL,
        RouteChoice::Fd => EINSTEIN_FD_TOL,
    };
    let fit = fit_affine(&points, &values, tol)?;
    let xi: Vec<String> = fit.xi.iter().map(|&v| num(v)).collect();
    let messages = vec![format!(
        "{}: S ≈ {} + ⟨[{}], x⟩, residual_max {:e} over {} points",
        if fit.extremal { "extremal" } else { "not extremal" },
        num(fit.constant),
        xi.join(", "),
        fit.residual_max,
        points.len()
    )];
    let report = match cfg.format {
        Format::Json => json(&CurvatureReport { route: cfg.route, grid, samples, fit: FitRow::from(&fit) }),
        Format::Csv => {
            let mut out = csv_header(p.dim(), &["S_compact", "S_log", "detG"]);
            for s in &samples {
                out += &csv_row(&s.x, &[s.s_compact, s.s_log, s.det_g]);
            }
            out
        }
    };
    Ok(RunResult { status: ExitStatus::Success, report: Some(report), messages })
}

fn verify(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let (p, g) = load_domain(cfg)?;
    let plan = CompatibilityPlan { grid_resolution: cfg.grid, grid_margin: cfg.margin, ..CompatibilityPlan::default() };
    let rep = verify_compatibility(&p, &g, &plan)?;
    let status = if rep.pass { ExitStatus::Success } else { ExitStatus::Validation };
    let mut messages = vec![format!(
        "compatibility {}: δ in [{:e}, {:e}], min eigenvalue {:e}",
        if rep.pass { "passed" } else { "failed" },
        rep.delta_range.0,
        rep.delta_range.1,
        rep.min_eigenvalue
    )];
    messages.extend(rep.reasons.iter().cloned());
    let report = match cfg.format {
        Format::Json => json(&rep),
        Format::Csv => {
            let mut out = csv_header(p.dim(), &["target", "delta"]);
            for s in &rep.delta_samples {
                let coords: Vec<String> = s.point.iter().map(|&c| num(c)).collect();
                let target: Vec<String> = s.target.iter().map(|t| t.to_string()).collect();
                out += &format!("{},{},{}\n", coords.join(","), target.join(";"), num(s.delta));
            }
            out
        }
    };
    Ok(RunResult { status, report: Some(report), messages })
}

#[derive(Serialize)]
struct EinsteinOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
    route: RouteChoice,
    grid: GridSpec,
    #[serde(flatten)]
    report: toric_kahler::einstein::EinsteinReport,
}

fn einstein(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let grid = GridSpec { resolution: cfg.grid, margin: cfg.margin };
    let (report, tol) = match (cfg.m, cfg.route) {
        (Some(m), RouteChoice::Analytic) => (family_report(m, grid)?, EINSTEIN_TOL),
        _ => {
            let (p, g) = match cfg.m {
                Some(m) => {
                    let g = family_potential(m)?;
                    (g.domain().expect("family potential has a domain").clone(), g)
                }
                None => load_domain(cfg)?,
            };
            match cfg.route {
                RouteChoice::Analytic => (derdzinski_test(&g, &p, grid, EinsteinPath::Analytic)?, EINSTEIN_TOL),
                RouteChoice::Fd => (derdzinski_test(&g, &p, grid, EinsteinPath::Fd)?, EINSTEIN_FD_TOL),
            }
        }
    };
    let ok = report.consistent(tol, SSTAR_TOL);
    let mut messages = vec![format!(
        "Derdzinski functional {}: mean {}, relative spread {:e}",
        if ok { "constant" } else { "not constant" },
        num(report.derdzinski_mean),
        report.derdzinski_relative_spread
    )];
    if let (Some(c), Some(e)) = (report.sstar_closed, report.sstar_max_error) {
        messages.push(format!("S* closed form {}, max deviation {e:e}", num(c)));
    }
    messages.extend(report.notes.iter().cloned());
    let status = if ok { ExitStatus::Success } else { ExitStatus::Validation };
    let text = match cfg.format {
        Format::Json => json(&EinsteinOutput { m: cfg.m, route: cfg.route, grid, report }),
        Format::Csv => {
            let n = report.points.first().map_or(2, |p| p.x.len());
            let mut out = csv_header(n, &["S", "D", "S*"]);
            for pt in &report.points {
                out += &csv_row(&pt.x, &[pt.s, pt.derdzinski, pt.sstar]);
            }
            out
        }
    };
    Ok(RunResult { status, report: Some(text), messages })
}

#[derive(Serialize)]
struct ConeReport {
    m: f64,
    angle: f64,
    two_pi_over_m: f64,
    error: f64,
    quadrature: QuadratureSpec,
}

fn cone(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let m = cfg.m.expect("checked at parse time");
    let q = QuadratureSpec::default();
    let angle = cone_angle(m, q)?;
    let expected = 2.0 * std::f64::consts::PI / m;
    let rep = ConeReport { m, angle, two_pi_over_m: expected, error: (angle - expected).abs(), quadrature: q };
    let report = match cfg.format {
        Format::Json => json(&rep),
        Format::Csv => format!("m,angle,two_pi_over_m\n{},{},{}\n", num(m), num(angle), num(expected)),
    };
    Ok(RunResult {
        status: ExitStatus::Success,
        report: Some(report),
        messages: vec![format!("cone angle {} (2π/m = {})", num(angle), num(expected))],
    })
}

/// Executes a parsed configuration. Never panics on bad input; errors are
/// folded into the returned status.
pub fn run(cfg: &RunConfig) -> RunResult {
    let result = match cfg.command {
        Command::Describe => describe(cfg),
        Command::Curvature => curvature(cfg),
        Command::Verify => verify(cfg),
        Command::Einstein => einstein(cfg),
        Command::Cone => cone(cfg),
    };
    result.unwrap_or_else(RunResult::failed)
}

/// Writes the report to `--out` (or `stdout`) and messages to `stderr`.
/// Returns the final status, which becomes a usage error if the output
/// file cannot be written.
pub fn emit(cfg: &RunConfig, result: &RunResult, stdout: &mut dyn Write, stderr: &mut dyn Write) -> ExitStatus {
    for m in &result.messages {
        let _ = writeln!(stderr, "{m}");
    }
    let Some(report) = &result.report else { return result.status };
    let written = match &cfg.out {
        Some(path) => std::fs::write(path, report).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => match stdout.write_all(report.as_bytes()).and_then(|()| stdout.flush()) {
            // a closed pipe (`toric … | head`) is the reader's choice, not a failure
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
            other => other.map_err(|e| e.to_string()),
        },
    };
    match written {
        Ok(()) => result.status,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            ExitStatus::Usage
        }
    }
}
