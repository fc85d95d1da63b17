//! Experiment configuration and orchestration behind the `gaussgreen` binary.
//!
//! A run reads a versioned TOML config, dispatches to one library operation, writes a CSV
//! table and a JSON summary into the output directory, and derives its exit status from
//! the summary's checks alone.

use std::fs;
use std::path::{Path, PathBuf};

use gaussgreen::cauchyflux::{read_flux_table, reconstruct_field, FluxFunctional, GridSpec, Reconstruction};
use gaussgreen::fields::{FieldSpec, TestFunction, VectorField};
use gaussgreen::geometry::{coarea_check, point2, Aabb, EpsilonSchedule, Location, Point, SetDescriptor, SetSpec};
use gaussgreen::regdist::{extract_regdist_level, graph_deformation, probe_band_samples, regularized_distance, MollifierSpec, ProbeSample, NONDEGENERACY_THRESHOLD};
use gaussgreen::traces::{compact_trace, exterior_trace, interior_trace, trace_measure_necessary, trace_measure_sufficient, TraceEstimate};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const SCHEMA_VERSION: u32 = 1;
/// Residual tolerance when neither the config nor `GAUSSGREEN_TOL` sets one.
pub const DEFAULT_TOL: f64 = 1e-3;
pub const TOL_ENV: &str = "GAUSSGREEN_TOL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Trace,
    CheckGaussGreen,
    Regdist,
    ReconstructFlux,
    CoareaCheck,
    Diagnostics,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Trace => "trace",
            Command::CheckGaussGreen => "check-gauss-green",
            Command::Regdist => "regdist",
            Command::ReconstructFlux => "reconstruct-flux",
            Command::CoareaCheck => "coarea-check",
            Command::Diagnostics => "diagnostics",
        }
    }
}

/// Either an explicit list or `start · ratio^k`, `k < count`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub ratio: Option<f64>,
    pub count: Option<usize>,
}

impl ScheduleConfig {
    pub fn expand(&self) -> Result<EpsilonSchedule, RunError> {
        let sched = match (&self.values, self.start, self.ratio, self.count) {
            (Some(v), None, None, None) => EpsilonSchedule::new(v.clone()),
            (None, Some(s), Some(r), Some(c)) => EpsilonSchedule::geometric(s, r, c),
            _ => return Err(RunError::Config("schedule: give either `values` or all of `start`, `ratio`, `count`".into())),
        };
        sched.map_err(|e| RunError::Config(format!("schedule: {e}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Interior,
    Exterior,
    Compact,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceOptions {
    #[serde(default)]
    pub side: Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegdistOptions {
    /// Width of the probe band `0 < |ρ| < band`.
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub radial_order: Option<usize>,
    pub angular_order: Option<usize>,
    /// Extracts `{ρ = level}` into the CSV when given.
    pub level: Option<f64>,
    /// Deforms boundary points of a graph domain to `{ρ = ε}` when given.
    pub deformation_eps: Option<f64>,
    #[serde(default = "default_deformation_samples")]
    pub deformation_samples: usize,
}

fn default_band() -> f64 {
    0.1
}

fn default_samples() -> usize {
    10_000
}

fn default_deformation_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxOptions {
    /// Tabulated flux CSV (`axis,s,c1,d1[,c2,d2],value`); the `field` table is the source
    /// and the oracle otherwise.
    pub table: Option<PathBuf>,
    pub grid: GridSpec,
    /// Cube sides; several values also report observed orders.
    pub windows: Vec<f64>,
    pub domain_lo: Option<Vec<f64>>,
    pub domain_hi: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoareaOptions {
    pub eps: Vec<f64>,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsOptions {
    #[serde(default)]
    pub probes: Vec<[f64; 2]>,
    #[serde(default)]
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub residual: Option<f64>,
    #[serde(default = "default_coarea_tol")]
    pub coarea: f64,
    #[serde(default = "default_rms_tol")]
    pub rms: f64,
    #[serde(default = "default_deformation_tol")]
    pub deformation: f64,
}

fn default_coarea_tol() -> f64 {
    1e-4
}

fn default_rms_tol() -> f64 {
    0.01
}

fn default_deformation_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub command: Option<Command>,
    pub field: Option<FieldSpec>,
    pub set: Option<SetSpec>,
    pub phi: Option<TestFunction>,
    pub schedule: Option<ScheduleConfig>,
    /// Grid cell size; defaults to half the smallest ε.
    pub resolution: Option<f64>,
    #[serde(default = "default_tolerances")]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    pub trace: Option<TraceOptions>,
    pub regdist: Option<RegdistOptions>,
    pub flux: Option<FluxOptions>,
    pub coarea: Option<CoareaOptions>,
    pub diagnostics: Option<DiagnosticsOptions>,
}

fn default_tolerances() -> Tolerances {
    Tolerances {
        residual: None,
        coarea: default_coarea_tol(),
        rms: default_rms_tol(),
        deformation: default_deformation_tol(),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Module(#[from] gaussgreen::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    /// 2 for invalid input, 1 for failures during the run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Module(gaussgreen::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}

/// Parses a TOML config; errors name the offending key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, RunError> {
    let de = toml::Deserializer::new(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        RunError::Config(format!("at `{path}`: {}", e.into_inner().message().trim()))
    })?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(RunError::Config(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", cfg.schema_version)));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Residual tolerance used when the config does not set one.
    pub default_tol: f64,
}

impl RunOptions {
    /// Output in `out_dir`, default tolerance from `GAUSSGREEN_TOL` when set.
    pub fn from_env(out_dir: PathBuf, seed: u64) -> Result<Self, RunError> {
        let default_tol = match std::env::var(TOL_ENV) {
            Ok(v) => v
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|t| *t > 0.0 && t.is_finite())
                .ok_or_else(|| RunError::Config(format!("{TOL_ENV}={v} is not a positive number")))?,
            Err(_) => DEFAULT_TOL,
        };
        Ok(RunOptions { out_dir, seed, default_tol })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value ≤ tolerance`.
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }

    /// Passes when `value ≥ tolerance`.
    fn at_least(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value >= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub command: Command,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub results: serde_json::Value,
}

impl Summary {
    /// 0 iff every check passed.
    pub fn exit_status(&self) -> i32 {
        if self.checks.iter().all(|c| c.passed) {
            0
        } else {
            1
        }
    }
}

fn need<'a, T>(v: &'a Option<T>, key: &str, cmd: Command) -> Result<&'a T, RunError> {
    v.as_ref().ok_or_else(|| RunError::Config(format!("`{key}` is required for `{}`", cmd.name())))
}

fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    cmd: Command,
}

impl Context<'_> {
    fn field(&self) -> Result<VectorField, RunError> {
        Ok(VectorField::new(need(&self.cfg.field, "field", self.cmd)?.clone())?)
    }

    fn set(&self) -> Result<SetDescriptor, RunError> {
        Ok(SetDescriptor::new(need(&self.cfg.set, "set", self.cmd)?.clone())?)
    }

    fn phi(&self) -> Result<TestFunction, RunError> {
        let phi = self.cfg.phi.clone().unwrap_or(TestFunction::constant(1.0));
        phi.validate()?;
        Ok(phi)
    }

    fn schedule(&self) -> Result<EpsilonSchedule, RunError> {
        need(&self.cfg.schedule, "schedule", self.cmd)?.expand()
    }

    fn resolution(&self, smallest: f64) -> Result<f64, RunError> {
        match self.cfg.resolution {
            Some(r) if r > 0.0 && r.is_finite() => Ok(r),
            Some(r) => Err(RunError::Config(format!("resolution must be > 0, got {r}"))),
            None => Ok(0.5 * smallest),
        }
    }

    fn tol(&self) -> f64 {
        self.cfg.tolerances.residual.unwrap_or(self.opts.default_tol)
    }

    fn path(&self, configured: &Option<PathBuf>, default: &str) -> PathBuf {
        self.opts.out_dir.join(configured.clone().unwrap_or_else(|| PathBuf::from(default)))
    }

    fn write(&self, path: &Path, text: &str) -> Result<(), RunError> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|source| RunError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(path, text).map_err(|source| RunError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    fn write_csv(&self, text: &str) -> Result<PathBuf, RunError> {
        let p = self.path(&self.cfg.output.csv, &format!("{}.csv", self.cmd.name()));
        self.write(&p, text)?;
        Ok(p)
    }
}

fn trace_csv(est: &TraceEstimate) -> Result<String, RunError> {
    let mut buf = Vec::new();
    est.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii csv"))
}

fn trace_json(est: &TraceEstimate) -> serde_json::Value {
    json!({
        "side": est.side,
        "volume_side": est.volume_side,
        "limit": est.limit,
        "limit_error": est.limit_error,
        "residual": est.residual,
        "good_count": est.good_count,
    })
}

/// Runs one experiment, writing its CSV table and JSON summary under `opts.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, cmd: Command, opts: &RunOptions) -> Result<Summary, RunError> {
    if let Some(c) = cfg.command {
        if c != cmd {
            return Err(RunError::Config(format!("config is for `{}` but `{}` was requested", c.name(), cmd.name())));
        }
    }
    let ctx = Context { cfg, opts, cmd };
    let (checks, results) = match cmd {
        Command::Trace => run_trace(&ctx)?,
        Command::CheckGaussGreen => run_check_gauss_green(&ctx)?,
        Command::Regdist => run_regdist(&ctx)?,
        Command::ReconstructFlux => run_reconstruct(&ctx)?,
        Command::CoareaCheck => run_coarea(&ctx)?,
        Command::Diagnostics => run_diagnostics(&ctx)?,
    };
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        command: cmd,
        passed: checks.iter().all(|c| c.passed),
        checks,
        results,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(gaussgreen::Error::from)?;
    ctx.write(&ctx.path(&cfg.output.summary, "summary.json"), &text)?;
    Ok(summary)
}

type Outcome = Result<(Vec<Check>, serde_json::Value), RunError>;

fn run_trace(ctx: &Context) -> Outcome {
    let (field, set, phi, sched) = (ctx.field()?, ctx.set()?, ctx.phi()?, ctx.schedule()?);
    let h = ctx.resolution(*sched.values.last().expect("nonempty"))?;
    let side = ctx.cfg.trace.clone().unwrap_or_default().side;
    let est = match side {
        Side::Interior => interior_trace(&field, &set, &phi, &sched, h)?,
        Side::Exterior => exterior_trace(&field, &set, &phi, &sched, h)?,
        Side::Compact => compact_trace(&field, &set, &phi, &sched, h)?,
    };
    log::info!("{est}");
    ctx.write_csv(&trace_csv(&est)?)?;
    Ok((vec![Check::at_most("residual", est.residual, ctx.tol())], trace_json(&est)))
}

fn run_check_gauss_green(ctx: &Context) -> Outcome {
    let (field, set, phi, sched) = (ctx.field()?, ctx.set()?, ctx.phi()?, ctx.schedule()?);
    let h = ctx.resolution(*sched.values.last().expect("nonempty"))?;
    let int = interior_trace(&field, &set, &phi, &sched, h)?;
    let ext = exterior_trace(&field, &set, &phi, &sched, h)?;
    let boundary_atoms: f64 = field
        .divergence()
        .atoms
        .iter()
        .filter(|(p, _)| set.classify(p) == Location::Boundary)
        .map(|(p, m)| m * phi.eval(p))
        .sum();
    let gap = ((ext.boundary_value() - int.boundary_value()) - boundary_atoms).abs();
    let tol = ctx.tol();
    let mut csv = String::from("side,eps,boundary_integral,good_flag\n");
    for (name, est) in [("interior", &int), ("exterior", &ext)] {
        for s in &est.per_eps {
            csv.push_str(&format!("{name},{},{},{}\n", f17(s.eps), f17(s.boundary_integral), u8::from(s.good)));
        }
    }
    ctx.write_csv(&csv)?;
    Ok((
        vec![
            Check::at_most("interior_residual", int.residual, tol),
            Check::at_most("exterior_residual", ext.residual, tol),
            Check::at_most("boundary_atom_gap", gap, tol),
        ],
        json!({
            "interior": trace_json(&int),
            "exterior": trace_json(&ext),
            "boundary_atom_mass": boundary_atoms,
            "boundary_atom_gap": gap,
        }),
    ))
}

fn mollifier(dim: usize, o: &RegdistOptions) -> Result<MollifierSpec, RunError> {
    let def = MollifierSpec::new(dim)?;
    Ok(MollifierSpec::with_orders(
        dim,
        o.radial_order.unwrap_or(def.radial_order),
        o.angular_order.unwrap_or(def.angular_order),
    )?)
}

fn run_regdist(ctx: &Context) -> Outcome {
    let set = ctx.set()?;
    let o = ctx.cfg.regdist.clone().unwrap_or(RegdistOptions {
        band: default_band(),
        samples: default_samples(),
        radial_order: None,
        angular_order: None,
        level: None,
        deformation_eps: None,
        deformation_samples: default_deformation_samples(),
    });
    let dim = set.dim();
    let moll = mollifier(dim, &o)?;
    let probes = probe_band_samples(&set, o.band, o.samples, &moll, ctx.opts.seed)?;
    let fold = |f: fn(f64, f64) -> f64, init: f64, get: fn(&ProbeSample) -> f64| probes.iter().map(get).fold(init, f);
    let min_grad = fold(f64::min, f64::INFINITY, |s| s.grad_norm);
    let max_grad = fold(f64::max, 0.0, |s| s.grad_norm);
    let min_ratio = fold(f64::min, f64::INFINITY, |s| s.ratio);
    let max_ratio = fold(f64::max, f64::NEG_INFINITY, |s| s.ratio);
    let mut checks = vec![
        Check::at_least("min_ratio", min_ratio, 0.5),
        Check::at_most("max_ratio", max_ratio, 2.0),
        Check::at_most("max_grad", max_grad, 2.0 + 1e-6),
        Check::at_least("min_grad", min_grad, NONDEGENERACY_THRESHOLD),
    ];
    let mut results = json!({
        "band": o.band,
        "samples": probes.len(),
        "min_grad": min_grad,
        "max_grad": max_grad,
        "min_ratio": min_ratio,
        "max_ratio": max_ratio,
    });
    let header = if dim == 3 { "x,y,z,d,rho,ratio,grad_norm\n" } else { "x,y,d,rho,ratio,grad_norm\n" };
    let mut csv = String::from(header);
    for s in &probes {
        let cols: Vec<String> = s.x.iter().take(dim).chain([s.distance, s.rho, s.ratio, s.grad_norm].iter()).map(|c| f17(*c)).collect();
        csv.push_str(&cols.join(","));
        csv.push('\n');
    }
    ctx.write_csv(&csv)?;
    if let Some(level) = o.level {
        let h = ctx.resolution(0.25 * level.abs())?;
        let mesh = extract_regdist_level(&set, level, h, &moll)?;
        let mut buf = Vec::new();
        mesh.write_csv(&mut buf)?;
        ctx.write(&ctx.opts.out_dir.join("regdist_level.csv"), &String::from_utf8(buf).expect("ascii csv"))?;
        results["level"] = json!({"value": level, "measure": mesh.total_measure, "facets": mesh.facets.len(), "good": mesh.is_good()});
    }
    if let Some(eps) = o.deformation_eps {
        let SetSpec::Graph { profile, window, .. } = set.spec() else {
            return Err(RunError::Config("`regdist.deformation_eps` needs a graph set".into()));
        };
        let n = o.deformation_samples.max(1);
        let mut worst: f64 = 0.0;
        let mut rows = String::from("x,y,fx,fy,rho\n");
        for k in 0..n {
            let t = window[0] + (window[1] - window[0]) * (k as f64 + 0.5) / n as f64;
            let x = point2(t, profile.eval(t));
            let f = graph_deformation(&set, eps, &x, &moll)?;
            let rho = regularized_distance(&set, &f, &moll)?.rho;
            worst = worst.max((rho - eps).abs());
            rows.push_str(&format!("{},{},{},{},{}\n", f17(x.x), f17(x.y), f17(f.x), f17(f.y), f17(rho)));
        }
        ctx.write(&ctx.opts.out_dir.join("regdist_deformation.csv"), &rows)?;
        checks.push(Check::at_most("deformation_residual", worst, ctx.cfg.tolerances.deformation));
        results["deformation"] = json!({"eps": eps, "samples": n, "max_residual": worst});
    }
    Ok((checks, results))
}

fn reconstruction_csv(rec: &Reconstruction) -> String {
    let mut out = if rec.dim == 3 { String::from("x,y,z,f1,f2,f3\n") } else { String::from("x,y,f1,f2\n") };
    for p in &rec.points {
        let Some(v) = p.value else { continue };
        let cols: Vec<String> = p.x[..rec.dim].iter().chain(&v[..rec.dim]).map(|c| f17(*c)).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

fn run_reconstruct(ctx: &Context) -> Outcome {
    let o = need(&ctx.cfg.flux, "flux", ctx.cmd)?;
    let dim = o.grid.lo.len();
    if o.windows.is_empty() || o.windows.iter().any(|w| !(*w > 0.0)) {
        return Err(RunError::Config("flux.windows must be a nonempty list of positive sides".into()));
    }
    let oracle = ctx.cfg.field.as_ref().map(|f| VectorField::new(f.clone())).transpose()?;
    let flux = match (&o.table, &oracle) {
        (Some(path), _) => {
            let file = fs::File::open(path).map_err(|source| RunError::Io { path: path.clone(), source })?;
            FluxFunctional::from_table(dim, read_flux_table(file)?)?
        }
        (None, Some(f)) => FluxFunctional::from_field(f),
        (None, None) => return Err(RunError::Config("`reconstruct-flux` needs `field` or `flux.table`".into())),
    };
    let domain = match (&o.domain_lo, &o.domain_hi) {
        (Some(lo), Some(hi)) if lo.len() == dim && hi.len() == dim => {
            let p = |v: &Vec<f64>| Point::new(v[0], v[1], v.get(2).copied().unwrap_or(0.0));
            Some(Aabb::new(p(lo), p(hi)))
        }
        (None, None) => None,
        _ => return Err(RunError::Config("flux.domain_lo and flux.domain_hi must both be given with the grid dimension".into())),
    };
    let mut rows = Vec::new();
    let mut last = None;
    for &w in &o.windows {
        let rec = reconstruct_field(&flux, &o.grid, w, domain.as_ref())?;
        let err = oracle.as_ref().map(|f| rec.relative_rms_error(f));
        rows.push(json!({"window": w, "relative_rms_error": err, "skipped": rec.skipped}));
        last = Some((rec, err));
    }
    let (rec, err) = last.expect("at least one window");
    ctx.write_csv(&reconstruction_csv(&rec))?;
    let errors: Vec<f64> = rows.iter().filter_map(|r| r["relative_rms_error"].as_f64()).collect();
    let orders: Vec<f64> = o
        .windows
        .windows(2)
        .zip(errors.windows(2))
        .map(|(w, e)| (e[0] / e[1]).ln() / (w[0] / w[1]).ln())
        .collect();
    let mut checks = Vec::new();
    if let Some(e) = err {
        checks.push(Check::at_most("relative_rms_error", e, ctx.cfg.tolerances.rms));
    }
    Ok((checks, json!({"windows": rows, "observed_orders": orders})))
}

fn run_coarea(ctx: &Context) -> Outcome {
    let set = ctx.set()?;
    let o = need(&ctx.cfg.coarea, "coarea", ctx.cmd)?;
    if o.eps.is_empty() {
        return Err(RunError::Config("coarea.eps must not be empty".into()));
    }
    let smallest = o.eps.iter().copied().fold(f64::INFINITY, f64::min);
    let h = ctx.resolution(0.05 * smallest)?;
    let disk = match set.spec() {
        SetSpec::Ball { center, radius } if center.len() == 2 => Some(*radius),
        _ => None,
    };
    let mut csv = String::from("eps,shell_integral,level_integral,relative_gap,analytic\n");
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for &eps in &o.eps {
        let rep = coarea_check(&set, eps, h, o.levels)?;
        let analytic = disk.map(|r| std::f64::consts::PI * (r * r - (r - eps).max(0.0).powi(2)));
        let analytic_gap = analytic.map(|a| (rep.shell_integral - a).abs() / a);
        worst = worst.max(rep.relative_gap()).max(analytic_gap.unwrap_or(0.0));
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            f17(eps),
            f17(rep.shell_integral),
            f17(rep.level_integral),
            f17(rep.relative_gap()),
            analytic.map(f17).unwrap_or_default()
        ));
        rows.push(json!({"eps": eps, "shell_integral": rep.shell_integral, "level_integral": rep.level_integral, "relative_gap": rep.relative_gap(), "analytic": analytic, "analytic_gap": analytic_gap}));
    }
    ctx.write_csv(&csv)?;
    Ok((vec![Check::at_most("max_relative_error", worst, ctx.cfg.tolerances.coarea)], json!({ "per_eps": rows })))
}

fn run_diagnostics(ctx: &Context) -> Outcome {
    let (field, set, sched) = (ctx.field()?, ctx.set()?, ctx.schedule()?);
    let h = ctx.resolution(*sched.values.last().expect("nonempty"))?;
    let o = ctx.cfg.diagnostics.clone().unwrap_or(DiagnosticsOptions {
        probes: Vec::new(),
        radii: Vec::new(),
    });
    let suff = trace_measure_sufficient(&field, &set, &sched, h)?;
    let mut csv = String::from("eps,shell_average\n");
    for (e, a) in &suff.shell_averages {
        csv.push_str(&format!("{},{}\n", f17(*e), f17(*a)));
    }
    ctx.write_csv(&csv)?;
    let mut results = json!({ "sufficient": suff });
    if !o.probes.is_empty() && !o.radii.is_empty() {
        let probes: Vec<Point> = o.probes.iter().map(|p| point2(p[0], p[1])).collect();
        results["necessary"] = serde_json::to_value(trace_measure_necessary(&field, &set, &probes, &o.radii)?).map_err(gaussgreen::Error::from)?;
    }
    Ok((Vec::new(), results))
}
