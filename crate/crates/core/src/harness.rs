//! Run configuration, experiment drivers and result files.
//!
//! Every driver returns plain data; [`write_results`] and friends persist it
//! as line-delimited JSON plus an RFC 4180 CSV table. Output files are never
//! overwritten: each write creates a new timestamped file.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::baselines::{full_feature_baseline, integrate_problem, Method, StepperConfig, DEFAULT_AB_ORDER, FULL_FEATURE_LIMIT};
use crate::error::{Error, Result};
use crate::linear_solver::PrimalModel;
use crate::metrics::{compute_errors, ErrorMetrics, Timings};
use crate::nonlinear_solver::{convergence_diagnostics, NewtonOptions, NewtonTrace};
use crate::nystrom::{SamplingStrategy, DEFAULT_DROP_TOL, DEFAULT_LEVERAGE_RIDGE};
use crate::ode_model::{linspace, problem, reference_solution, validate_problem, BenchmarkProblem, ValidationReport};
use crate::pipeline::{fit, rebuild_model, Fit, FitConfig};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Points in the plot-data grid.
pub const PLOT_POINTS: usize = 1000;
/// Newton budget for nonlinear problems without a catalog budget.
pub const DEFAULT_NEWTON_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Nls,
    FullFeature,
    Rk4,
    Eab,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [SolverKind::Nls, SolverKind::FullFeature, SolverKind::Rk4, SolverKind::Eab];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Nls => "nls",
            SolverKind::FullFeature => "full_feature",
            SolverKind::Rk4 => "rk4",
            SolverKind::Eab => "eab",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "nls" => Ok(SolverKind::Nls),
            "full_feature" | "full" => Ok(SolverKind::FullFeature),
            "rk4" => Ok(SolverKind::Rk4),
            "eab" => Ok(SolverKind::Eab),
            other => Err(Error::InvalidConfig(format!(
                "unknown solver `{other}` (expected nls, full_feature, rk4 or eab)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Equidistant,
    Random,
    Leverage,
}

impl StrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Equidistant => "equidistant",
            StrategyKind::Random => "random",
            StrategyKind::Leverage => "leverage",
        }
    }

    pub fn sampling(&self, seed: u64) -> SamplingStrategy {
        match self {
            StrategyKind::Equidistant => SamplingStrategy::Equidistant,
            StrategyKind::Random => SamplingStrategy::Random { seed },
            StrategyKind::Leverage => SamplingStrategy::LeverageScore {
                seed,
                ridge: DEFAULT_LEVERAGE_RIDGE,
            },
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "equidistant" => Ok(StrategyKind::Equidistant),
            "random" => Ok(StrategyKind::Random),
            "leverage" | "leverage_score" => Ok(StrategyKind::Leverage),
            other => Err(Error::InvalidConfig(format!(
                "unknown strategy `{other}` (expected equidistant, random or leverage)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: usize,
    pub n: usize,
    pub m: usize,
    pub sigma2: f64,
    pub gamma: f64,
    pub strategy: StrategyKind,
    pub solver: SolverKind,
    pub max_iters: usize,
    /// Newton tolerance on `|F|_inf`; `None` means `1e-10 (1 + gamma)`.
    pub tol: Option<f64>,
    pub seed: u64,
    pub eab_order: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Catalog defaults for `problem` with the Nyström solver.
    pub fn defaults(problem_id: usize) -> Result<Self> {
        let p = problem(problem_id)?;
        let d = p.defaults;
        Ok(Self {
            problem: problem_id,
            n: d.n,
            m: d.m,
            sigma2: d.sigma2,
            gamma: d.gamma,
            strategy: StrategyKind::Equidistant,
            solver: SolverKind::Nls,
            max_iters: d.newton_iters.unwrap_or(DEFAULT_NEWTON_ITERS),
            tol: None,
            seed: 0,
            eab_order: DEFAULT_AB_ORDER,
            output_dir: PathBuf::from("results"),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(1..=16).contains(&self.problem) {
            return bad(format!("problem must be in 1..=16, got {}", self.problem));
        }
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.solver != SolverKind::FullFeature && (self.m < 2 || self.m > self.n) {
            return bad(format!("m must satisfy 2 <= m <= n, got m = {} with n = {}", self.m, self.n));
        }
        if self.solver == SolverKind::FullFeature && self.n > FULL_FEATURE_LIMIT {
            return bad(format!("full_feature needs n <= {FULL_FEATURE_LIMIT}, got {}", self.n));
        }
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return bad(format!("tol must be positive, got {tol}"));
            }
        }
        if !(2..=4).contains(&self.eab_order) {
            return bad(format!("eab_order must be 2..=4, got {}", self.eab_order));
        }
        Ok(())
    }

    pub fn newton_options(&self) -> NewtonOptions {
        let mut opts = NewtonOptions::for_gamma(self.gamma, self.max_iters);
        if let Some(tol) = self.tol {
            opts.tol = tol;
        }
        opts
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            m: if self.solver == SolverKind::FullFeature { self.n } else { self.m },
            sigma2: self.sigma2,
            gamma: self.gamma,
            strategy: self.strategy.sampling(self.seed),
            drop_tol: DEFAULT_DROP_TOL,
            newton: self.newton_options(),
        }
    }
}

/// Optional settings from a TOML file or from command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub problem: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub sigma2: Option<f64>,
    pub gamma: Option<f64>,
    pub strategy: Option<StrategyKind>,
    pub solver: Option<SolverKind>,
    pub max_iters: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub eab_order: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Fields set in `over` win.
    pub fn merged(&self, over: &ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            problem: over.problem.or(self.problem),
            n: over.n.or(self.n),
            m: over.m.or(self.m),
            sigma2: over.sigma2.or(self.sigma2),
            gamma: over.gamma.or(self.gamma),
            strategy: over.strategy.or(self.strategy),
            solver: over.solver.or(self.solver),
            max_iters: over.max_iters.or(self.max_iters),
            tol: over.tol.or(self.tol),
            seed: over.seed.or(self.seed),
            eab_order: over.eab_order.or(self.eab_order),
            out: over.out.clone().or_else(|| self.out.clone()),
        }
    }

    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.m {
            cfg.m = v;
        }
        if let Some(v) = self.sigma2 {
            cfg.sigma2 = v;
        }
        if let Some(v) = self.gamma {
            cfg.gamma = v;
        }
        if let Some(v) = self.strategy {
            cfg.strategy = v;
        }
        if let Some(v) = self.solver {
            cfg.solver = v;
        }
        if let Some(v) = self.max_iters {
            cfg.max_iters = v;
        }
        if self.tol.is_some() {
            cfg.tol = self.tol;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.eab_order {
            cfg.eab_order = v;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
    }

    /// Catalog defaults for the selected problem, then these overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let id = self
            .problem
            .ok_or_else(|| Error::InvalidConfig("no problem selected".into()))?;
        self.resolve_for(id)
    }

    pub fn resolve_for(&self, problem_id: usize) -> Result<RunConfig> {
        let mut cfg = RunConfig::defaults(problem_id).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub m_eff: Option<usize>,
    pub kkt_relative_residual: Option<f64>,
    pub kkt_backward_error: Option<f64>,
    pub newton_iterations: Option<usize>,
    pub gauss_newton_steps: Option<usize>,
    pub newton_converged: Option<bool>,
    pub convergence_order: Option<f64>,
    pub integrator_steps: Option<usize>,
}

/// Everything needed to rebuild the trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub landmarks: Vec<f64>,
    pub sigma2: f64,
    pub drop_tol: f64,
    pub omega: Vec<f64>,
    pub bias: f64,
}

impl ModelParams {
    pub fn from_model(model: &PrimalModel) -> Self {
        let map = model.feature_map();
        Self {
            landmarks: map.landmarks().to_vec(),
            sigma2: map.kernel().sigma2(),
            drop_tol: map.drop_tol(),
            omega: model.omega().to_vec(),
            bias: model.bias(),
        }
    }

    pub fn rebuild(&self) -> Result<PrimalModel> {
        rebuild_model(&self.landmarks, self.sigma2, self.drop_tol, self.omega.clone(), self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config: RunConfig,
    /// `"ok"` or the error class of a failed run.
    pub status: String,
    pub error: Option<String>,
    pub domain: (f64, f64),
    /// Size of the evaluation grid (the training grid).
    pub eval_points: usize,
    pub metrics: Option<ErrorMetrics>,
    pub timings: Timings,
    pub newton_trace: Option<Vec<f64>>,
    pub diagnostics: SolverDiagnostics,
    pub model: Option<ModelParams>,
    pub created_at: String,
    pub version: String,
}

impl RunResult {
    fn empty(config: &RunConfig, p: &BenchmarkProblem) -> Self {
        Self {
            config: config.clone(),
            status: "ok".into(),
            error: None,
            domain: p.domain,
            eval_points: config.n,
            metrics: None,
            timings: Timings::default(),
            newton_trace: None,
            diagnostics: SolverDiagnostics::default(),
            model: None,
            created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true),
            version: ARTIFACT_VERSION.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

fn record_trace(result: &mut RunResult, trace: &NewtonTrace) {
    result.newton_trace = Some(trace.residuals.clone());
    result.diagnostics.newton_iterations = Some(trace.iterations());
    result.diagnostics.gauss_newton_steps = Some(trace.gauss_newton_steps);
    result.diagnostics.newton_converged = Some(trace.converged);
    result.diagnostics.convergence_order = convergence_diagnostics(trace).ok().map(|r| r.order);
}

fn record_model(
    result: &mut RunResult,
    model: &PrimalModel,
    grid: &[f64],
    reference: &[f64],
    train_seconds: f64,
) -> Result<()> {
    let start = Instant::now();
    let y = model.predict(0, grid)?;
    result.timings = Timings {
        train_seconds,
        predict_seconds: start.elapsed().as_secs_f64(),
    };
    result.diagnostics.m_eff = Some(model.feature_map().m_eff());
    result.model = Some(ModelParams::from_model(model));
    result.metrics = Some(compute_errors(&y, reference)?);
    Ok(())
}

/// Run one configuration. Solver failures are returned as errors; see
/// [`run_recorded`] for the variant that folds them into the record.
pub fn run(config: &RunConfig) -> Result<RunResult> {
    let (result, err) = run_inner(config)?;
    match err {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

/// Run one configuration and record any solver failure in the result.
/// Only configuration errors are returned as `Err`.
pub fn run_recorded(config: &RunConfig) -> Result<RunResult> {
    Ok(run_inner(config)?.0)
}

fn fail(mut result: RunResult, e: Error) -> (RunResult, Option<Error>) {
    result.status = e.kind().into();
    result.error = Some(e.to_string());
    (result, Some(e))
}

fn run_inner(config: &RunConfig) -> Result<(RunResult, Option<Error>)> {
    config.validate()?;
    let p = problem(config.problem)?;
    let mut result = RunResult::empty(config, &p);
    let grid = p.grid(config.n);
    let reference = reference_solution(&p, &grid)?;
    match config.solver {
        SolverKind::Nls => match fit(&p, &grid, &config.fit_config()) {
            Ok(trained) => {
                if let Err(e) = finish_fit(&mut result, &trained, &grid, &reference) {
                    return Ok(fail(result, e));
                }
            }
            Err(Error::MaxItersExceeded(failure)) => {
                record_trace(&mut result, &failure.trace);
                let _ = record_model(&mut result, &failure.model, &grid, &reference, f64::NAN);
                return Ok(fail(result, Error::MaxItersExceeded(failure)));
            }
            Err(e) => return Ok(fail(result, e)),
        },
        SolverKind::FullFeature => match full_feature_baseline(&p, &grid, config.gamma, config.sigma2) {
            Ok((model, timings)) => {
                let y = model.predict(0, &grid)?;
                result.timings = timings;
                result.diagnostics.m_eff = Some(model.feature_map().m_eff());
                result.model = Some(ModelParams::from_model(&model));
                match compute_errors(&y, &reference) {
                    Ok(m) => result.metrics = Some(m),
                    Err(e) => return Ok(fail(result, e)),
                }
            }
            Err(e) => return Ok(fail(result, e)),
        },
        SolverKind::Rk4 | SolverKind::Eab => {
            let h = (p.domain.1 - p.domain.0) / (config.n - 1) as f64;
            let method = match config.solver {
                SolverKind::Rk4 => Method::Rk4,
                _ => Method::AdamsBashforth {
                    order: config.eab_order,
                },
            };
            let stepper = StepperConfig::new(h, method)?;
            let start = Instant::now();
            match integrate_problem(&p, &stepper) {
                Ok(tr) => {
                    let secs = start.elapsed().as_secs_f64();
                    // one integration produces the values: the same time is
                    // reported for train and predict
                    result.timings = Timings {
                        train_seconds: secs,
                        predict_seconds: secs,
                    };
                    result.diagnostics.integrator_steps = Some(tr.values.len() - 1);
                    let reference = reference_solution(&p, &tr.times)?;
                    match compute_errors(&tr.values, &reference) {
                        Ok(m) => result.metrics = Some(m),
                        Err(e) => return Ok(fail(result, e)),
                    }
                }
                Err(e) => return Ok(fail(result, e)),
            }
        }
    }
    Ok((result, None))
}

fn finish_fit(result: &mut RunResult, trained: &Fit, grid: &[f64], reference: &[f64]) -> Result<()> {
    if let Some(trace) = &trained.trace {
        record_trace(result, trace);
    }
    if let Some(kkt) = &trained.kkt {
        result.diagnostics.kkt_relative_residual = Some(kkt.relative_residual());
        result.diagnostics.kkt_backward_error = Some(kkt.backward_error());
    }
    record_model(result, &trained.model, grid, reference, trained.train_seconds)
}

// ---------------------------------------------------------------- output

/// Create `dir/stem-<timestamp>.ext`, never reusing an existing name.
pub fn create_unique(dir: &Path, stem: &str, ext: &str) -> Result<(File, PathBuf)> {
    fs::create_dir_all(dir)?;
    let stamp = Utc::now().format("%Y%m%dT%H%M%S%.6fZ").to_string();
    for attempt in 0..1000 {
        let name = if attempt == 0 {
            format!("{stem}-{stamp}.{ext}")
        } else {
            format!("{stem}-{stamp}-{attempt}.{ext}")
        };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => return Ok((f, path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::AlreadyExists,
        "could not find a fresh output file name",
    )))
}

/// 17 significant digits; empty for absent or non-finite values.
pub fn fmt_f64(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.16e}"),
        Some(x) if x.is_nan() => "NaN".into(),
        Some(x) => if x > 0.0 { "inf".into() } else { "-inf".into() },
        None => String::new(),
    }
}

pub const RESULT_COLUMNS: [&str; 18] = [
    "problem",
    "solver",
    "MAE",
    "RMSE",
    "Linf",
    "R2",
    "train_s",
    "predict_s",
    "status",
    "n",
    "m",
    "sigma2",
    "gamma",
    "strategy",
    "seed",
    "m_eff",
    "newton_iterations",
    "created_at",
];

pub fn result_row(r: &RunResult) -> Vec<String> {
    let m = r.metrics;
    let c = &r.config;
    vec![
        c.problem.to_string(),
        c.solver.name().into(),
        fmt_f64(m.map(|m| m.mae)),
        fmt_f64(m.map(|m| m.rmse)),
        fmt_f64(m.map(|m| m.linf)),
        fmt_f64(m.and_then(|m| m.r2)),
        fmt_f64(Some(r.timings.train_seconds)),
        fmt_f64(Some(r.timings.predict_seconds)),
        r.status.clone(),
        c.n.to_string(),
        c.m.to_string(),
        fmt_f64(Some(c.sigma2)),
        fmt_f64(Some(c.gamma)),
        c.strategy.name().into(),
        c.seed.to_string(),
        r.diagnostics.m_eff.map(|v| v.to_string()).unwrap_or_default(),
        r.diagnostics.newton_iterations.map(|v| v.to_string()).unwrap_or_default(),
        r.created_at.clone(),
    ]
}

fn csv_writer(file: File) -> csv::Writer<BufWriter<File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file))
}

/// Write rows under `header` to a fresh CSV file.
pub fn write_csv_table<S: AsRef<str>>(
    dir: &Path,
    stem: &str,
    header: &[S],
    rows: &[Vec<String>],
) -> Result<PathBuf> {
    let (file, path) = create_unique(dir, stem, "csv")?;
    let mut w = csv_writer(file);
    w.write_record(header.iter().map(|h| h.as_ref()))?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Write records to a fresh line-delimited JSON file.
pub fn write_jsonl<T: Serialize>(dir: &Path, stem: &str, records: &[T]) -> Result<PathBuf> {
    let (file, path) = create_unique(dir, stem, "jsonl")?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(path)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub json: PathBuf,
    pub csv: PathBuf,
}

pub fn write_results(dir: &Path, stem: &str, results: &[RunResult]) -> Result<OutputFiles> {
    let json = write_jsonl(dir, stem, results)?;
    let rows: Vec<Vec<String>> = results.iter().map(result_row).collect();
    let csv = write_csv_table(dir, stem, &RESULT_COLUMNS, &rows)?;
    Ok(OutputFiles { json, csv })
}

// --------------------------------------------------------------- drivers

/// Run and persist one configuration.
pub fn cli_solve(config: &RunConfig) -> Result<(RunResult, OutputFiles)> {
    let result = run(config)?;
    let stem = format!("solve-p{}-{}", config.problem, config.solver.name());
    let files = write_results(&config.output_dir, &stem, std::slice::from_ref(&result))?;
    Ok((result, files))
}

/// Cross product of problems and solvers at catalog defaults plus
/// `overrides`. Failed cells are kept in the table with their error class.
pub fn cli_bench(problems: &[usize], solvers: &[SolverKind], overrides: &ConfigOverrides) -> Result<Vec<RunResult>> {
    let mut out = Vec::with_capacity(problems.len() * solvers.len());
    for &id in problems {
        for &solver in solvers {
            let cell = ConfigOverrides {
                solver: Some(solver),
                ..overrides.clone()
            };
            let cfg = cell.resolve_for(id)?;
            out.push(run_recorded(&cfg)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    N,
    M,
    Sigma2,
    Gamma,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::M => "m",
            SweepAxis::Sigma2 => "sigma2",
            SweepAxis::Gamma => "gamma",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(SweepAxis::N),
            "m" => Ok(SweepAxis::M),
            "sigma2" => Ok(SweepAxis::Sigma2),
            "gamma" => Ok(SweepAxis::Gamma),
            other => Err(Error::InvalidConfig(format!(
                "unknown sweep axis `{other}` (expected n, m, sigma2 or gamma)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub train_seconds: f64,
    pub predict_seconds: f64,
    pub mae: Option<f64>,
    pub status: String,
    pub result: RunResult,
}

pub const SWEEP_COLUMNS: [&str; 6] = ["value", "train_s", "predict_s", "MAE", "status", "m_eff"];

pub fn sweep_row(r: &SweepRow) -> Vec<String> {
    vec![
        fmt_f64(Some(r.value)),
        fmt_f64(Some(r.train_seconds)),
        fmt_f64(Some(r.predict_seconds)),
        fmt_f64(r.mae),
        r.status.clone(),
        r.result.diagnostics.m_eff.map(|v| v.to_string()).unwrap_or_default(),
    ]
}

/// One run per axis value, everything else from `base`. Each point is run
/// `repeats` times and the fastest train and predict times are kept.
pub fn cli_sweep(base: &RunConfig, axis: SweepAxis, values: &[f64], repeats: usize) -> Result<Vec<SweepRow>> {
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidConfig("sweep values must be positive".into()));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("sweep values must be sorted".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        match axis {
            SweepAxis::N => cfg.n = integer_value(value, "n")?,
            SweepAxis::M => cfg.m = integer_value(value, "m")?,
            SweepAxis::Sigma2 => cfg.sigma2 = value,
            SweepAxis::Gamma => cfg.gamma = value,
        }
        cfg.validate()?;
        let mut best = run_recorded(&cfg)?;
        for _ in 1..repeats.max(1) {
            let again = run_recorded(&cfg)?;
            best.timings.train_seconds = best.timings.train_seconds.min(again.timings.train_seconds);
            best.timings.predict_seconds = best.timings.predict_seconds.min(again.timings.predict_seconds);
        }
        rows.push(SweepRow {
            value,
            train_seconds: best.timings.train_seconds,
            predict_seconds: best.timings.predict_seconds,
            mae: best.metrics.map(|m| m.mae),
            status: best.status.clone(),
            result: best,
        });
    }
    Ok(rows)
}

fn integer_value(v: f64, name: &str) -> Result<usize> {
    if v.fract() != 0.0 {
        return Err(Error::InvalidConfig(format!("{name} must be an integer, got {v}")));
    }
    Ok(v as usize)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("xs", "need at least two points"));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("xs", "log-log fit needs positive finite values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("xs", "all abscissae coincide"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub t: f64,
    pub y_reference: f64,
    pub y_predicted: f64,
    pub abs_error: f64,
}

pub const PLOT_COLUMNS: [&str; 4] = ["t", "y_reference", "y_predicted", "abs_error"];

pub fn plot_row(r: &PlotRow) -> Vec<String> {
    [r.t, r.y_reference, r.y_predicted, r.abs_error]
        .iter()
        .map(|&v| fmt_f64(Some(v)))
        .collect()
}

pub enum PlotSource<'a> {
    Result(&'a RunResult),
    Config(&'a RunConfig),
}

/// Reference and prediction on a uniform [`PLOT_POINTS`] grid.
pub fn cli_plotdata(source: PlotSource<'_>) -> Result<Vec<PlotRow>> {
    let (p, ts, ys) = match source {
        PlotSource::Result(r) => {
            let params = r.model.as_ref().ok_or(Error::MissingModel)?;
            let p = problem(r.config.problem)?;
            let ts = linspace(p.domain.0, p.domain.1, PLOT_POINTS);
            let ys = params.rebuild()?.predict(0, &ts)?;
            (p, ts, ys)
        }
        PlotSource::Config(cfg) => {
            cfg.validate()?;
            let p = problem(cfg.problem)?;
            match cfg.solver {
                SolverKind::Rk4 | SolverKind::Eab => {
                    let h = (p.domain.1 - p.domain.0) / (PLOT_POINTS - 1) as f64;
                    let method = if cfg.solver == SolverKind::Rk4 {
                        Method::Rk4
                    } else {
                        Method::AdamsBashforth { order: cfg.eab_order }
                    };
                    let tr = integrate_problem(&p, &StepperConfig::new(h, method)?)?;
                    (p, tr.times, tr.values)
                }
                _ => {
                    let result = run(cfg)?;
                    return cli_plotdata(PlotSource::Result(&result));
                }
            }
        }
    };
    let reference = reference_solution(&p, &ts)?;
    Ok(ts
        .iter()
        .zip(&reference)
        .zip(&ys)
        .map(|((&t, &yr), &yp)| PlotRow {
            t,
            y_reference: yr,
            y_predicted: yp,
            abs_error: (yp - yr).abs(),
        })
        .collect())
}

pub fn write_plotdata(dir: &Path, stem: &str, rows: &[PlotRow]) -> Result<PathBuf> {
    let table: Vec<Vec<String>> = rows.iter().map(plot_row).collect();
    write_csv_table(dir, stem, &PLOT_COLUMNS, &table)
}

/// Reference checks for the whole catalog.
pub fn cli_validate() -> Vec<ValidationReport> {
    crate::ode_model::catalog().iter().map(validate_problem).collect()
}
