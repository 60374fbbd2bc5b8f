//! Command-line front end: CSV ingestion, option resolution, and output
//! files for the `fit`, `cv`, `simulate` and `scale-check` commands.
//!
//! Every option can also come from a TOML file given with `--config`;
//! explicit flags win over the file. `--dump-config` prints the fully
//! resolved options as TOML and exits.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::center::Centering;
use crate::crossval::{power_grid, rcv_kfold, rcv_loo, CVConfig, CVResult, CVTarget};
use crate::error::Error;
use crate::grid::{FunctionalSample, Grid};
use crate::projpursuit::{fit, Mode, PCFit, PPConfig};
use crate::scale::{Location, ScaleKind, ScaleSpec};
use crate::sieve::BasisKind;
use crate::simulate::{run_monte_carlo, Estimator, ModelKind, ParamChoice, SimModel};

/// Largest tolerated deviation of a header grid point from equal spacing.
pub const GRID_TOL: f64 = 1e-9;

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, bad flag value)
  3  input file could not be read
  4  malformed CSV input (ragged row, non-numeric cell, uneven grid)
  5  invalid configuration (config file, inconsistent options)
  6  numerical failure in the estimator
  7  output could not be written";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Input { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Csv(#[from] CsvError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] Error),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 3,
            CliError::Csv(_) => 4,
            CliError::Config(_) => 5,
            CliError::Numerical(_) => 6,
            CliError::Output { .. } => 7,
        }
    }
}

/// Malformed CSV input. Rows count data lines from 1; columns count from 1.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CsvError {
    #[error("empty file: expected a header row of grid points")]
    Empty,
    #[error("header, column {column}: grid point '{value}' is not a number")]
    BadHeader { column: usize, value: String },
    #[error("header: need at least 3 grid points, found {found}")]
    ShortHeader { found: usize },
    #[error("header, column {column}: grid is not equispaced (point {value}, expected {expected})")]
    NotEquispaced {
        column: usize,
        value: f64,
        expected: f64,
    },
    #[error("row {row}: expected {expected} cells, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: '{value}' is not a finite number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },
    #[error("no data rows")]
    NoRows,
    #[error("line {line}: {message}")]
    Syntax { line: u64, message: String },
}

/// Reads a curve sample: a header of grid points, then one curve per row.
pub fn ingest_csv(path: &Path) -> Result<FunctionalSample, CliError> {
    let file = fs::File::open(path).map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })?;
    Ok(parse_csv(file)?)
}

pub fn parse_csv<R: Read>(reader: R) -> Result<FunctionalSample, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let syntax = |e: csv::Error| CsvError::Syntax {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let header = records.next().ok_or(CsvError::Empty)?.map_err(syntax)?;
    let points = header
        .iter()
        .enumerate()
        .map(|(k, s)| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CsvError::BadHeader {
                    column: k + 1,
                    value: s.to_string(),
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    let grid = grid_from_points(&points)?;

    let m = points.len();
    let mut rows = Vec::new();
    for (r, rec) in records.enumerate() {
        let rec = rec.map_err(syntax)?;
        if rec.len() != m {
            return Err(CsvError::Ragged {
                row: r + 1,
                expected: m,
                found: rec.len(),
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(k, s)| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CsvError::NonNumeric {
                        row: r + 1,
                        column: k + 1,
                        value: s.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CsvError::NoRows);
    }
    Ok(FunctionalSample::from_rows(grid, rows).expect("rows validated against the header"))
}

fn grid_from_points(points: &[f64]) -> Result<Grid, CsvError> {
    let m = points.len();
    if m < 3 {
        return Err(CsvError::ShortHeader { found: m });
    }
    let dt = (points[m - 1] - points[0]) / (m - 1) as f64;
    for (k, &t) in points.iter().enumerate() {
        let expected = points[0] + k as f64 * dt;
        if !(dt > 0.0) || (t - expected).abs() > GRID_TOL * expected.abs().max(1.0) {
            return Err(CsvError::NotEquispaced {
                column: k + 1,
                value: t,
                expected,
            });
        }
    }
    Ok(Grid::new(points[0] - dt, points[m - 1] + dt, m).expect("spacing checked positive"))
}

/// Round-trip-safe decimal (17 significant digits).
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Output {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Output {
        path: dir.to_owned(),
        message: e.to_string(),
    })
}

fn curves_csv(grid: &Grid, rows: &[&[f64]]) -> Vec<u8> {
    let mut out = String::new();
    let header: Vec<String> = grid.points().into_iter().map(num).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|&v| num(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

/// Writes `directions.csv` and `fit.json` into `dir`.
pub fn emit_fit(pc: &PCFit, dir: &Path) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let rows: Vec<&[f64]> = pc.directions.iter().map(|d| d.values()).collect();
    write_file(&dir.join("directions.csv"), &curves_csv(&pc.grid, &rows))?;
    let json = serde_json::json!({
        "mode": pc.config.mode.label(),
        "param": pc.config.mode.param(),
        "basis": match pc.config.mode {
            Mode::Sieve { basis } => Some(basis),
            _ => None,
        },
        "scale": pc.config.scale.kind.label(),
        "centering": pc.config.centering.label(),
        "q": pc.q(),
        "lambda": pc.values,
        "truncated": pc.truncated,
        "scale_nonconverged": pc.steps.iter().map(|s| s.scale_nonconverged).collect::<Vec<_>>(),
        "grid": { "a": pc.grid.a(), "b": pc.grid.b(), "m": pc.grid.len() },
        "center": pc.center.values(),
    });
    let text = serde_json::to_string_pretty(&json).expect("json values are finite");
    write_file(&dir.join("fit.json"), text.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Raw,
    PenScale,
    PenNorm,
    Sieve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisName {
    Fourier,
    Bspline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleName {
    Sd,
    Mad,
    Mscale,
}

impl From<ScaleName> for ScaleKind {
    fn from(s: ScaleName) -> Self {
        match s {
            ScaleName::Sd => ScaleKind::Sd,
            ScaleName::Mad => ScaleKind::Mad,
            ScaleName::Mscale => ScaleKind::MScale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterName {
    Mean,
    Pmedian,
    Smedian,
}

impl From<CenterName> for Centering {
    fn from(c: CenterName) -> Self {
        match c {
            CenterName::Mean => Centering::Mean,
            CenterName::Pmedian => Centering::PointwiseMedian,
            CenterName::Smedian => Centering::SpatialMedian,
        }
    }
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Options shared by all commands. Unset options fall back to the config
/// file, then to built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Command the options were resolved for (written by --dump-config).
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    /// Input CSV: header of grid points, one curve per row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Scale index [default: mscale; simulate: all three].
    #[arg(long, value_enum)]
    pub scale: Option<ScaleName>,
    /// Estimator [default: raw; simulate: pen-scale and pen-norm].
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Sieve basis family [default: fourier].
    #[arg(long, value_enum)]
    pub basis: Option<BasisName>,
    /// Fourier sieve size; the basis has 2 qn + 1 functions [default: 15].
    #[arg(long)]
    pub qn: Option<usize>,
    /// Number of cubic B-splines [default: 20].
    #[arg(long)]
    pub pn: Option<usize>,
    /// rho = rho_a * n^(-rho_alpha).
    #[arg(long)]
    pub rho_a: Option<f64>,
    /// Exponent for --rho-a [default: 3].
    #[arg(long)]
    pub rho_alpha: Option<f64>,
    /// tau = tau_a * n^(-tau_alpha).
    #[arg(long)]
    pub tau_a: Option<f64>,
    /// Exponent for --tau-a [default: 3].
    #[arg(long)]
    pub tau_alpha: Option<f64>,
    /// Absolute rho; overrides --rho-a.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Absolute tau; overrides --tau-a.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Centering [default: mean for sd, smedian otherwise].
    #[arg(long, value_enum)]
    pub center: Option<CenterName>,
    /// Number of components [default: 3].
    #[arg(long)]
    pub q: Option<usize>,
    /// Number of folds; cv without it uses leave-one-out.
    #[arg(long)]
    pub kfold: Option<usize>,
    /// Components used by the cross-validation criterion [default: 1].
    #[arg(long)]
    pub ell: Option<usize>,
    /// Coefficients a of the grid a * n^(-alpha) [default: 0.05,0.1,0.25,0.5,0.75,1,1.5,2].
    #[arg(long, value_delimiter = ',')]
    pub grid_a: Option<Vec<f64>>,
    /// Exponents alpha of the grid [default: 3,4].
    #[arg(long, value_delimiter = ',')]
    pub grid_alpha: Option<Vec<f64>>,
    /// Contamination model for simulate [default: C0].
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// Monte Carlo replications [default: 100].
    #[arg(long)]
    pub nr: Option<usize>,
    /// Sample size for simulate and scale-check [default: 100].
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid points for simulate [default: 50].
    #[arg(long)]
    pub m: Option<usize>,
    /// Random seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    /// `self` with every option that is set in `top` replaced.
    pub fn overlaid(mut self, top: &Settings) -> Settings {
        overlay!(self, top; command, input, output, scale, mode, basis, qn, pn, rho_a, rho_alpha,
            tau_a, tau_alpha, rho, tau, center, q, kfold, ell, grid_a, grid_alpha, model, nr, n, m, seed);
        self
    }

    /// Fills every option the command uses with its default.
    fn resolved(mut self, command: &str) -> Settings {
        self.command = Some(command.to_string());
        let simulate = command == "simulate";
        if !simulate {
            self.scale.get_or_insert(ScaleName::Mscale);
            self.mode.get_or_insert(ModeName::Raw);
        }
        self.basis.get_or_insert(BasisName::Fourier);
        self.qn.get_or_insert(15);
        self.pn.get_or_insert(20);
        self.rho_alpha.get_or_insert(3.0);
        self.tau_alpha.get_or_insert(3.0);
        self.q.get_or_insert(3);
        self.ell.get_or_insert(1);
        self.grid_a
            .get_or_insert_with(|| vec![0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0]);
        self.grid_alpha.get_or_insert_with(|| vec![3.0, 4.0]);
        self.model.get_or_insert(ModelKind::C0);
        self.nr.get_or_insert(100);
        self.n.get_or_insert(100);
        self.m.get_or_insert(50);
        self.seed.get_or_insert(0);
        self.output.get_or_insert_with(|| PathBuf::from("rfpca-out"));
        self
    }

    fn centering_for(&self, scale: ScaleKind) -> Centering {
        match self.center {
            Some(c) => c.into(),
            None if scale == ScaleKind::Sd => Centering::Mean,
            None => Centering::SpatialMedian,
        }
    }

    fn param(&self, abs: Option<f64>, a: Option<f64>, alpha: Option<f64>, n: usize) -> f64 {
        abs.unwrap_or_else(|| a.map_or(0.0, |a| a * (n as f64).powf(-alpha.unwrap_or(3.0))))
    }

    fn mode_for(&self, name: ModeName, n: usize) -> Result<Mode, CliError> {
        Ok(match name {
            ModeName::Raw => Mode::Raw,
            ModeName::PenScale => Mode::PenalizeScale {
                rho: self.param(self.rho, self.rho_a, self.rho_alpha, n),
            },
            ModeName::PenNorm => Mode::PenalizeNorm {
                tau: self.param(self.tau, self.tau_a, self.tau_alpha, n),
            },
            ModeName::Sieve => Mode::Sieve {
                basis: match self.basis.unwrap_or(BasisName::Fourier) {
                    BasisName::Fourier => BasisKind::Fourier {
                        qn: self.qn.unwrap_or(15),
                    },
                    BasisName::Bspline => BasisKind::BSpline {
                        pn: self.pn.unwrap_or(20),
                    },
                },
            },
        })
    }

    fn pp_config(&self, n: usize) -> Result<PPConfig, CliError> {
        let scale: ScaleKind = self.scale.unwrap_or(ScaleName::Mscale).into();
        let mode = self.mode_for(self.mode.unwrap_or(ModeName::Raw), n)?;
        let cfg = PPConfig::new(ScaleSpec::of_kind(scale), mode, self.q.unwrap_or(3), self.centering_for(scale));
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    fn input(&self) -> Result<&Path, CliError> {
        self.input
            .as_deref()
            .ok_or_else(|| CliError::Config("--input is required for this command".into()))
    }

    fn output(&self) -> &Path {
        self.output.as_deref().unwrap_or(Path::new("rfpca-out"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rfpca",
    version,
    about = "Robust functional principal components by projection pursuit",
    after_help = EXIT_CODES
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML file with options; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the resolved options as TOML and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit principal directions to a curve sample.
    #[command(after_help = EXIT_CODES)]
    Fit(Settings),
    /// Select rho or tau by robust cross-validation.
    #[command(after_help = EXIT_CODES)]
    Cv(Settings),
    /// Monte Carlo study under a contamination model.
    #[command(after_help = EXIT_CODES)]
    Simulate(Settings),
    /// SD, MAD and M-scale of a sample (standard normal draws without --input).
    #[command(after_help = EXIT_CODES)]
    ScaleCheck(Settings),
}

impl Command {
    fn parts(&self) -> (&'static str, &Settings) {
        match self {
            Command::Fit(s) => ("fit", s),
            Command::Cv(s) => ("cv", s),
            Command::Simulate(s) => ("simulate", s),
            Command::ScaleCheck(s) => ("scale-check", s),
        }
    }
}

fn load_config(path: &Path) -> Result<Settings, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rfpca: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let (name, flags) = cli.command.parts();
    let base = match &cli.config {
        Some(p) => load_config(p)?,
        None => Settings::default(),
    };
    if let Some(c) = &base.command {
        if c != name {
            return Err(CliError::Config(format!(
                "config file was written for '{c}', not '{name}'"
            )));
        }
    }
    let settings = base.overlaid(flags).resolved(name);
    if cli.dump_config {
        let text = toml::to_string(&settings).map_err(|e| CliError::Config(e.to_string()))?;
        print!("{text}");
        return Ok(());
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match name {
        "fit" => run_fit(&settings),
        "cv" => run_cv(&settings),
        "simulate" => run_simulate(&settings),
        _ => run_scale_check(&settings),
    })
}

/// Requests the data cannot satisfy are configuration errors; the rest are
/// numerical failures.
fn classify(e: Error) -> CliError {
    match e {
        Error::InvalidArgument(_) | Error::InvalidDimension(_) | Error::TooFewPoints { .. } => {
            CliError::Config(e.to_string())
        }
        e => CliError::Numerical(e),
    }
}

fn run_fit(s: &Settings) -> Result<(), CliError> {
    let data = ingest_csv(s.input()?)?;
    let cfg = s.pp_config(data.len())?;
    let pc = fit(&data, &cfg).map_err(classify)?;
    emit_fit(&pc, s.output())?;
    for (k, l) in pc.values.iter().enumerate() {
        println!("lambda_{} = {}", k + 1, num(*l));
    }
    Ok(())
}

fn cv_target(mode: ModeName) -> Result<CVTarget, CliError> {
    match mode {
        ModeName::PenScale => Ok(CVTarget::Rho),
        ModeName::PenNorm => Ok(CVTarget::Tau),
        other => Err(CliError::Config(format!(
            "cv needs --mode pen-scale or pen-norm, got {}",
            other.to_possible_value().map_or("?".into(), |v| v.get_name().to_string())
        ))),
    }
}

fn run_cv(s: &Settings) -> Result<(), CliError> {
    let data = ingest_csv(s.input()?)?;
    let target = cv_target(s.mode.unwrap_or(ModeName::Raw))?;
    let template = s.pp_config(data.len())?;
    let cfg = CVConfig {
        ell: s.ell.unwrap_or(1),
        folds: s.kfold.unwrap_or(0),
        seed: s.seed.unwrap_or(0),
        // Residual norms are scored with the estimator's own scale family.
        scale_about_zero: ScaleSpec::of_kind(template.scale.kind).with_location(Location::Zero),
        centering: template.centering,
        ..CVConfig::new(
            target,
            power_grid(
                s.grid_a.as_deref().unwrap_or_default(),
                s.grid_alpha.as_deref().unwrap_or_default(),
                data.len(),
            ),
        )
    };
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let res = match s.kfold {
        Some(_) => rcv_kfold(&data, &cfg, &template),
        None => rcv_loo(&data, &cfg, &template),
    };
    let res = res.map_err(classify)?;
    emit_cv(&res, &cfg, s.output())?;
    println!("selected = {}", num(res.selected));
    Ok(())
}

fn emit_cv(res: &CVResult, cfg: &CVConfig, dir: &Path) -> Result<(), CliError> {
    ensure_dir(dir)?;
    let mut csv = String::from("param,criterion,failures\n");
    for r in &res.table {
        let c = r.criterion.map_or_else(|| "NA".to_string(), num);
        csv.push_str(&format!("{},{},{}\n", num(r.param), c, r.failures));
    }
    write_file(&dir.join("cv.csv"), csv.as_bytes())?;
    let json = serde_json::json!({
        "target": cfg.target,
        "ell": cfg.ell,
        "criterion_scale": cfg.scale_about_zero.kind.label(),
        "centering": cfg.centering.label(),
        "scheme": if res.folds.iter().all(|f| f.len() == 1) { "loo".to_string() } else { format!("{}-fold", res.folds.len()) },
        "selected": res.selected,
        "table": res.table,
        "folds": res.folds,
    });
    let text = serde_json::to_string_pretty(&json).expect("serializable");
    write_file(&dir.join("cv.json"), text.as_bytes())
}

fn run_simulate(s: &Settings) -> Result<(), CliError> {
    let n = s.n.unwrap_or(100);
    let m = s.m.unwrap_or(50);
    let grid = Grid::new(-1.0, 1.0, m).map_err(|e| CliError::Config(e.to_string()))?;
    let model = SimModel::new(s.model.unwrap_or(ModelKind::C0))
        .with_n(n)
        .with_grid(grid);
    let scales: Vec<ScaleName> = match s.scale {
        Some(x) => vec![x],
        None => vec![ScaleName::Sd, ScaleName::Mad, ScaleName::Mscale],
    };
    let modes: Vec<ModeName> = match s.mode {
        Some(x) => vec![x],
        None => vec![ModeName::PenScale, ModeName::PenNorm],
    };
    let mut estimators = Vec::new();
    for &mode in &modes {
        for &sc in &scales {
            let penalized = matches!(mode, ModeName::PenScale | ModeName::PenNorm);
            let param = match s.kfold {
                Some(k) if penalized => ParamChoice::KFold {
                    coefs: s.grid_a.clone().unwrap_or_default(),
                    alphas: s.grid_alpha.clone().unwrap_or_default(),
                    folds: k,
                    ell: s.ell.unwrap_or(1),
                },
                _ => ParamChoice::Fixed,
            };
            let kind: ScaleKind = sc.into();
            let mut est = Estimator::new(kind, s.mode_for(mode, n)?, param);
            est.centering = s.centering_for(kind);
            estimators.push(est);
        }
    }
    if let Some(k) = s.kfold {
        if k < 2 || n < 2 * k {
            return Err(CliError::Config(format!("--kfold {k} needs K >= 2 and n >= 2K (n = {n})")));
        }
    }
    let summary = run_monte_carlo(&[model], &estimators, s.nr.unwrap_or(100), s.seed.unwrap_or(0))
        .map_err(classify)?;
    let dir = s.output();
    ensure_dir(dir)?;
    let mut buf = Vec::new();
    summary.write_csv(&mut buf).expect("writing to memory");
    write_file(&dir.join("summary.csv"), &buf)?;
    let text = serde_json::to_string_pretty(&summary).expect("serializable");
    write_file(&dir.join("summary.json"), text.as_bytes())?;
    for r in &summary.rows {
        println!("{} {} D{} = {:.4} ({} ok, {} failed)", r.model, r.estimator, r.j, r.mean_dj, r.nr, r.failures);
    }
    Ok(())
}

fn run_scale_check(s: &Settings) -> Result<(), CliError> {
    let sample: Vec<f64> = match &s.input {
        Some(p) => read_numbers(p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.unwrap_or(0));
            (0..s.n.unwrap_or(100)).map(|_| StandardNormal.sample(&mut rng)).collect()
        }
    };
    let mut out = serde_json::Map::new();
    out.insert("n".into(), sample.len().into());
    for kind in [ScaleKind::Sd, ScaleKind::Mad, ScaleKind::MScale] {
        let est = ScaleSpec::of_kind(kind).estimate(&sample)?;
        out.insert(kind.label().into(), serde_json::to_value(est).expect("serializable"));
        println!("{} = {}{}", kind.label(), num(est.value), if est.converged { "" } else { " (not converged)" });
    }
    let dir = s.output();
    ensure_dir(dir)?;
    let text = serde_json::to_string_pretty(&out).expect("serializable");
    write_file(&dir.join("scale.json"), text.as_bytes())
}

/// Numbers separated by commas or whitespace.
fn read_numbers(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.to_owned(),
        source,
    })?;
    let mut out = Vec::new();
    for (l, line) in text.lines().enumerate() {
        for (c, tok) in line
            .split(|ch: char| ch == ',' || ch.is_whitespace())
            .filter(|t| !t.is_empty())
            .enumerate()
        {
            let v = tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                CsvError::NonNumeric {
                    row: l + 1,
                    column: c + 1,
                    value: tok.to_string(),
                }
            })?;
            out.push(v);
        }
    }
    Ok(out)
}
