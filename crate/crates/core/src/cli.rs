//! Batch front end of the `trisecant` binary.
//!
//! Every run writes its report (JSON, or CSV where a command has a tabular
//! form) and, next to it, `<out>.manifest.json` with the SHA-256 of each input
//! file, every tolerance in effect, the crate version, the thread count and
//! the wall-clock time. Without `--out` the report goes to stdout and the
//! manifest to stderr as a single `manifest` line. Reports never contain
//! timings, so reruns are byte-identical.
//!
//! Failures print one line `trisecant: error kind=<Kind> reason="..."` on
//! stderr. Exit codes: 0 success, 1 numerical failure or unwritable output,
//! 2 bad input.

use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::curves::{CurveJson, CurvePeriods, CurvePoint, HyperellipticCurve};
use crate::error::Error;
use crate::ppav::{AbelianPoint, PeriodMatrix, PeriodMatrixJson};
use crate::theta::{riemann_theta, sigma_bits, EvalParams, SecondOrderTheta, ThetaCharacteristic};
use crate::trisecant::{
    build_theta_matrix_with, evaluate_equations, krichever_scan, minor_system, trisecant_membership_with,
    PointConfiguration, PointConfigurationJson, ScanParams, ScanReport,
};

pub const THREADS_ENV: &str = "TRISECANT_THREADS";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    UnknownCommand(String),
    BadFlag { flag: String, reason: String },
    MissingInput(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::UnknownCommand(_) => "UnknownCommand",
            CliError::BadFlag { .. } => "BadFlag",
            CliError::MissingInput(_) => "MissingInput",
        }
    }

    pub fn exit_code(&self) -> i32 {
        2
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::UnknownCommand(c) => write!(f, "unknown command '{c}'"),
            CliError::BadFlag { flag, reason } => write!(f, "{flag}: {reason}"),
            CliError::MissingInput(flag) => write!(f, "missing required input {flag}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Theta { tau: PathBuf, z: Vec<Complex64>, characteristic: ThetaCharacteristic, eps: f64 },
    Kummer { tau: PathBuf, z: Vec<Complex64>, eps: f64 },
    Periods { curve: PathBuf, tol: f64 },
    AbelJacobi { curve: PathBuf, x: Complex64, sheet: i8, tol: f64 },
    Equations { tau: PathBuf, h: PathBuf, z: Vec<Complex64>, eps: f64 },
    Trisecant { tau: PathBuf, h: PathBuf, x: Vec<Complex64>, tol: f64, eps: f64 },
    Scan { tau: PathBuf, h: PathBuf, params: ScanParams },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Theta { .. } => "theta",
            Command::Kummer { .. } => "kummer",
            Command::Periods { .. } => "periods",
            Command::AbelJacobi { .. } => "abel-jacobi",
            Command::Equations { .. } => "equations",
            Command::Trisecant { .. } => "trisecant",
            Command::Scan { .. } => "scan",
        }
    }

    fn has_csv(&self) -> bool {
        matches!(self, Command::Kummer { .. } | Command::Equations { .. } | Command::Scan { .. })
    }

    fn inputs(&self) -> Vec<&Path> {
        match self {
            Command::Theta { tau, .. } | Command::Kummer { tau, .. } => vec![tau],
            Command::Periods { curve, .. } | Command::AbelJacobi { curve, .. } => vec![curve],
            Command::Equations { tau, h, .. } | Command::Trisecant { tau, h, .. } | Command::Scan { tau, h, .. } => {
                vec![tau, h]
            }
        }
    }

    fn tolerances(&self) -> Value {
        match self {
            Command::Theta { eps, .. } | Command::Kummer { eps, .. } | Command::Equations { eps, .. } => {
                json!({ "eps": eps })
            }
            Command::Periods { tol, .. } | Command::AbelJacobi { tol, .. } => json!({ "quadrature_tol": tol }),
            Command::Trisecant { tol, eps, .. } => json!({ "rel_tol": tol, "eps": eps }),
            Command::Scan { params, .. } => json!({
                "rel_tol": params.tol,
                "eps": params.eps,
                "grid": params.grid,
                "screen": params.screen,
                "refine_steps": params.refine_steps,
                "max_theta_evals": params.max_theta_evals,
                "torsion_tol": params.torsion_tol,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub command: Command,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// `None` leaves the choice to `TRISECANT_THREADS`, then to the machine.
    pub threads: Option<usize>,
}

#[derive(Parser, Debug)]
#[command(name = "trisecant", version, about = "Theta functions, Kummer collinearity and trisecant scans")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Debug)]
struct Common {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format; defaults to the extension of --out, else json.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; falls back to TRISECANT_THREADS.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Riemann theta with characteristic.
    Theta {
        #[arg(long)]
        tau: PathBuf,
        /// Comma-separated complex coordinates, e.g. "0.1+0.2i,0".
        #[arg(long)]
        z: String,
        /// Characteristic as bit strings "a/b", e.g. "01/10"; zero by default.
        #[arg(long = "char")]
        characteristic: Option<String>,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Second-order theta coordinates of the Kummer image.
    Kummer {
        #[arg(long)]
        tau: PathBuf,
        #[arg(long)]
        z: String,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Normalized period matrix of a hyperelliptic curve.
    Periods {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Abel-Jacobi image of a curve point.
    AbelJacobi {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        x: String,
        /// Sheet of the point, 1 or -1.
        #[arg(long, default_value_t = 1, allow_negative_numbers = true)]
        sheet: i8,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Determinantal minors at a point.
    Equations {
        #[arg(long)]
        tau: PathBuf,
        #[arg(long = "H")]
        h: PathBuf,
        #[arg(long)]
        z: String,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Trisecant membership of a point, by collinearity and by minors.
    Trisecant {
        #[arg(long)]
        tau: PathBuf,
        #[arg(long = "H")]
        h: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Grid scan of the fundamental domain for trisecant points.
    Scan {
        #[arg(long)]
        tau: PathBuf,
        #[arg(long = "H")]
        h: PathBuf,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        /// Grid minima below this witness are refined.
        #[arg(long, default_value_t = 0.05)]
        screen: f64,
        #[arg(long, default_value_t = 10)]
        refine_steps: usize,
        #[arg(long, default_value_t = 2_000_000_000)]
        max_evals: u64,
        #[command(flatten)]
        common: Common,
    },
}

fn bad(flag: &str, reason: impl Into<String>) -> CliError {
    CliError::BadFlag { flag: flag.into(), reason: reason.into() }
}

fn parse_complex(flag: &str, s: &str) -> Result<Complex64, CliError> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let v = Complex64::from_str(&t).map_err(|_| bad(flag, format!("'{s}' is not a complex number")))?;
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(bad(flag, format!("'{s}' is not finite")));
    }
    Ok(v)
}

fn parse_complex_list(flag: &str, s: &str) -> Result<Vec<Complex64>, CliError> {
    if s.trim().is_empty() {
        return Err(bad(flag, "empty coordinate list"));
    }
    s.split(',').map(|p| parse_complex(flag, p)).collect()
}

fn parse_bits(flag: &str, s: &str) -> Result<Vec<u8>, CliError> {
    s.chars()
        .filter(|c| *c != ',')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(bad(flag, format!("characteristic digit '{c}' is not 0 or 1"))),
        })
        .collect()
}

fn parse_characteristic(s: &str) -> Result<ThetaCharacteristic, CliError> {
    let (a, b) = s.split_once('/').ok_or_else(|| bad("--char", "expected the form a/b, e.g. 01/10"))?;
    ThetaCharacteristic::new(parse_bits("--char", a)?, parse_bits("--char", b)?).map_err(|e| bad("--char", e.to_string()))
}

fn check_tol(flag: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(bad(flag, format!("{v} is not in (0, 1)")))
    }
}

fn check_path(flag: &str, p: PathBuf) -> Result<PathBuf, CliError> {
    if p.as_os_str().is_empty() {
        Err(bad(flag, "empty path"))
    } else {
        Ok(p)
    }
}

fn clap_error(err: clap::Error, argv: &[String]) -> CliError {
    let flag = || {
        err.get(clap::error::ContextKind::InvalidArg)
            .map(|v| v.to_string())
            .unwrap_or_else(|| "argument".into())
    };
    match err.kind() {
        ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            CliError::UnknownCommand(argv.first().cloned().unwrap_or_default())
        }
        ErrorKind::MissingRequiredArgument => CliError::MissingInput(flag()),
        _ => {
            let reason = err.render().to_string();
            bad(&flag(), reason.lines().next().unwrap_or("invalid argument").trim_start_matches("error: ").to_string())
        }
    }
}

/// Parses and validates a command line (without the program name).
pub fn parse_job<S: AsRef<str>>(argv: &[S]) -> Result<JobSpec, CliError> {
    let argv: Vec<String> = argv.iter().map(|s| s.as_ref().to_string()).collect();
    let full = std::iter::once(OsString::from("trisecant")).chain(argv.iter().map(OsString::from));
    let cli = Cli::try_parse_from(full).map_err(|e| clap_error(e, &argv))?;
    let (command, common) = match cli.command {
        Sub::Theta { tau, z, characteristic, eps, common } => {
            let z = parse_complex_list("--z", &z)?;
            let characteristic = match characteristic {
                Some(s) => parse_characteristic(&s)?,
                None => ThetaCharacteristic::zero(z.len()),
            };
            if characteristic.g() != z.len() {
                return Err(bad("--char", format!("has {} bits per half, --z has {} coordinates", characteristic.g(), z.len())));
            }
            let command =
                Command::Theta { tau: check_path("--tau", tau)?, z, characteristic, eps: check_tol("--eps", eps)? };
            (command, common)
        }
        Sub::Kummer { tau, z, eps, common } => {
            let command = Command::Kummer {
                tau: check_path("--tau", tau)?,
                z: parse_complex_list("--z", &z)?,
                eps: check_tol("--eps", eps)?,
            };
            (command, common)
        }
        Sub::Periods { curve, tol, common } => {
            (Command::Periods { curve: check_path("--curve", curve)?, tol: check_tol("--tol", tol)? }, common)
        }
        Sub::AbelJacobi { curve, x, sheet, tol, common } => {
            if sheet != 1 && sheet != -1 {
                return Err(bad("--sheet", format!("{sheet} is not 1 or -1")));
            }
            let command = Command::AbelJacobi {
                curve: check_path("--curve", curve)?,
                x: parse_complex("--x", &x)?,
                sheet,
                tol: check_tol("--tol", tol)?,
            };
            (command, common)
        }
        Sub::Equations { tau, h, z, eps, common } => {
            let command = Command::Equations {
                tau: check_path("--tau", tau)?,
                h: check_path("--H", h)?,
                z: parse_complex_list("--z", &z)?,
                eps: check_tol("--eps", eps)?,
            };
            (command, common)
        }
        Sub::Trisecant { tau, h, x, tol, eps, common } => {
            let command = Command::Trisecant {
                tau: check_path("--tau", tau)?,
                h: check_path("--H", h)?,
                x: parse_complex_list("--x", &x)?,
                tol: check_tol("--tol", tol)?,
                eps: check_tol("--eps", eps)?,
            };
            (command, common)
        }
        Sub::Scan { tau, h, grid, tol, eps, screen, refine_steps, max_evals, common } => {
            if grid < 4 {
                return Err(bad("--grid", format!("{grid} is below the minimum resolution 4")));
            }
            let params = ScanParams {
                grid,
                tol: check_tol("--tol", tol)?,
                eps: check_tol("--eps", eps)?,
                screen: check_tol("--screen", screen)?,
                refine_steps,
                max_theta_evals: max_evals,
                ..ScanParams::default()
            };
            (Command::Scan { tau: check_path("--tau", tau)?, h: check_path("--H", h)?, params }, common)
        }
    };
    let out = common.out.map(|p| check_path("--out", p)).transpose()?;
    let format = match common.format {
        Some(f) => f,
        None => match out.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        },
    };
    if format == Format::Csv && !command.has_csv() {
        return Err(bad("--format", format!("{} has no CSV form", command.name())));
    }
    if common.threads == Some(0) {
        return Err(bad("--threads", "must be at least 1"));
    }
    Ok(JobSpec { command, out, format, threads: common.threads })
}

/// Thread count from the flag, then the environment, then the machine.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(bad(THREADS_ENV, format!("'{v}' is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Formats a float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        // Keeps the sign of negative zero out of reports.
        return "0.0000000000000000e0".into();
    }
    format!("{v:.16e}")
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            // Short numeric rows stay on one line.
            if items.iter().all(|i| i.is_number()) {
                out.push('[');
                for (k, i) in items.iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, i, indent);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (k, i) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, i, indent + 1);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (k, (key, val)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String(key.clone()).to_string());
                out.push_str(": ");
                write_value(out, val, indent + 1);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Pretty JSON with fixed field order and 17-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, Error> {
    let v = serde_json::to_value(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut s = String::new();
    write_value(&mut s, &v, 0);
    s.push('\n');
    Ok(s)
}

fn compact_json(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, 0);
    s.split('\n').map(str::trim).collect::<Vec<_>>().join(" ")
}

pub fn scan_csv(report: &ScanReport) -> String {
    let mut s = String::new();
    let header: Vec<String> = (1..=report.g).flat_map(|i| [format!("x{i}"), format!("y{i}")]).collect();
    let _ = writeln!(s, "{},residual,two_torsion", header.join(","));
    for h in &report.hits {
        for i in 0..report.g {
            let _ = write!(s, "{},{},", format_float(h.x[i]), format_float(h.y[i]));
        }
        let _ = writeln!(s, "{},{}", format_float(h.residual), u8::from(h.two_torsion));
    }
    s
}

/// Result of a run: exit code and the single diagnostic line, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub diagnostic: Option<String>,
}

#[derive(Debug)]
enum RunError {
    Cli(CliError),
    Lib(Error),
    Io { path: PathBuf, reason: String },
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Lib(e)
    }
}

impl From<CliError> for RunError {
    fn from(e: CliError) -> Self {
        RunError::Cli(e)
    }
}

fn diagnostic(kind: &str, reason: &str) -> String {
    format!("trisecant: error kind={kind} reason={}", Value::String(reason.to_string()))
}

impl RunError {
    fn outcome(&self) -> Outcome {
        let (code, line) = match self {
            RunError::Cli(e) => (e.exit_code(), diagnostic(e.kind(), &e.to_string())),
            RunError::Lib(e) => (if e.is_numerical() { 1 } else { 2 }, diagnostic(e.kind(), &e.to_string())),
            RunError::Io { path, reason } => (1, diagnostic("IoFailure", &format!("{}: {reason}", path.display()))),
        };
        Outcome { code, diagnostic: Some(line) }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, RunError> {
    fs::read(path).map_err(|e| RunError::Cli(CliError::MissingInput(format!("{}: {e}", path.display()))))
}

fn parse_input<T: serde::de::DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<T, RunError> {
    serde_json::from_slice(bytes)
        .map_err(|e| RunError::Lib(Error::InvalidInput(format!("{}: {e}", path.display()))))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

struct Inputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Inputs {
    fn load(command: &Command) -> Result<Self, RunError> {
        let files = command
            .inputs()
            .into_iter()
            .map(|p| Ok((p.to_path_buf(), read_input(p)?)))
            .collect::<Result<_, RunError>>()?;
        Ok(Self { files })
    }

    fn get<T: serde::de::DeserializeOwned>(&self, k: usize) -> Result<T, RunError> {
        parse_input(&self.files[k].0, &self.files[k].1)
    }

    fn tau(&self) -> Result<PeriodMatrix, RunError> {
        Ok(PeriodMatrix::from_json(&self.get::<PeriodMatrixJson>(0)?)?)
    }

    fn config(&self, tau: &PeriodMatrix) -> Result<PointConfiguration, RunError> {
        Ok(PointConfiguration::from_json(&self.get::<PointConfigurationJson>(1)?, tau)?)
    }

    fn curve(&self) -> Result<HyperellipticCurve, RunError> {
        Ok(HyperellipticCurve::from_json(&self.get::<CurveJson>(0)?)?)
    }
}

fn point(coords: &[Complex64], tau: &PeriodMatrix, flag: &str) -> Result<AbelianPoint, RunError> {
    if coords.len() != tau.g() {
        return Err(bad(flag, format!("has {} coordinates, tau has genus {}", coords.len(), tau.g())).into());
    }
    Ok(AbelianPoint::new(coords.to_vec()))
}

fn split(v: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    (v.iter().map(|c| c.re).collect(), v.iter().map(|c| c.im).collect())
}

fn sigma_label(k: usize, g: usize) -> String {
    sigma_bits(k, g).iter().map(|b| char::from(b'0' + b)).collect()
}

/// Report text plus extra manifest fields.
struct Report {
    body: String,
    extra: Map<String, Value>,
}

fn compute(spec: &JobSpec, inputs: &Inputs) -> Result<Report, RunError> {
    let mut extra = Map::new();
    let body = match &spec.command {
        Command::Theta { z, characteristic, eps, .. } => {
            let tau = inputs.tau()?;
            let z = point(z, &tau, "--z")?;
            let v = riemann_theta(&z, &tau, characteristic, &EvalParams::new(*eps)?)?;
            let chr = |bits: &[u8]| bits.iter().map(|b| char::from(b'0' + b)).collect::<String>();
            to_json_string(&json!({
                "value_re": v.re,
                "value_im": v.im,
                "characteristic": format!("{}/{}", chr(characteristic.a_bits()), chr(characteristic.b_bits())),
                "z": z.to_json(),
            }))?
        }
        Command::Kummer { z, eps, .. } => {
            let tau = inputs.tau()?;
            let z = point(z, &tau, "--z")?;
            let coords = SecondOrderTheta::new(&tau, &EvalParams::new(*eps)?)?.eval(&z)?;
            if coords.iter().all(|c| c.norm() == 0.0) {
                return Err(Error::AllCoordinatesVanish.into());
            }
            match spec.format {
                Format::Csv => {
                    let mut s = String::from("sigma,re,im\n");
                    for (k, c) in coords.iter().enumerate() {
                        let _ = writeln!(s, "{},{},{}", sigma_label(k, tau.g()), format_float(c.re), format_float(c.im));
                    }
                    s
                }
                Format::Json => {
                    let (re, im) = split(&coords);
                    to_json_string(&json!({ "coords_re": re, "coords_im": im }))?
                }
            }
        }
        Command::Periods { tol, .. } => {
            let periods = CurvePeriods::compute(&inputs.curve()?, *tol)?;
            extra.insert("est_error".into(), json!(periods.est_error()));
            to_json_string(&periods.tau().to_json())?
        }
        Command::AbelJacobi { x, sheet, tol, .. } => {
            let periods = CurvePeriods::compute(&inputs.curve()?, *tol)?;
            let p = CurvePoint::new(*x, *sheet)?;
            to_json_string(&periods.abel_jacobi(&p, *tol)?.to_json())?
        }
        Command::Equations { z, eps, .. } => {
            let tau = inputs.tau()?;
            let config = inputs.config(&tau)?;
            let z = point(z, &tau, "--z")?;
            let theta = SecondOrderTheta::new(&tau, &EvalParams::new(*eps)?)?;
            let sys = minor_system(tau.g(), config.points().len())?;
            let report = evaluate_equations(&build_theta_matrix_with(&theta, &config, &z)?, &sys)?;
            let labels: Vec<String> = report
                .rows
                .iter()
                .map(|r| r.iter().map(|&k| sigma_label(k, tau.g())).collect::<Vec<_>>().join(" "))
                .collect();
            match spec.format {
                Format::Csv => {
                    let mut s = String::from("rows,minor_re,minor_im,normalized\n");
                    for ((l, m), n) in labels.iter().zip(&report.minors).zip(&report.normalized) {
                        let _ = writeln!(s, "{l},{},{},{}", format_float(m.re), format_float(m.im), format_float(*n));
                    }
                    s
                }
                Format::Json => {
                    let minors: Vec<Value> = labels
                        .iter()
                        .zip(&report.minors)
                        .zip(&report.normalized)
                        .map(|((l, m), n)| json!({ "rows": l, "value_re": m.re, "value_im": m.im, "normalized": n }))
                        .collect();
                    to_json_string(&json!({
                        "g": tau.g(),
                        "k": sys.k,
                        "minors": minors,
                        "max_normalized_residual": report.max_normalized_residual,
                    }))?
                }
            }
        }
        Command::Trisecant { x, tol, eps, .. } => {
            let tau = inputs.tau()?;
            let config = inputs.config(&tau)?;
            let x = point(x, &tau, "--x")?;
            let theta = SecondOrderTheta::new(&tau, &EvalParams::new(*eps)?)?;
            to_json_string(&trisecant_membership_with(&theta, &config, &x, *tol)?)?
        }
        Command::Scan { params, .. } => {
            let tau = inputs.tau()?;
            let config = inputs.config(&tau)?;
            let report = krichever_scan(&tau, &config, params)?;
            extra.insert("scan_elapsed_ms".into(), json!(report.elapsed_ms as u64));
            extra.insert("hits".into(), json!(report.hits.len()));
            match spec.format {
                Format::Csv => scan_csv(&report),
                Format::Json => to_json_string(&report)?,
            }
        }
    };
    Ok(Report { body, extra })
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn run_inner(spec: &JobSpec, started: Instant) -> Result<(), RunError> {
    let threads = resolve_threads(spec.threads)?;
    let inputs = Inputs::load(&spec.command)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Io { path: PathBuf::from("<thread pool>"), reason: e.to_string() })?;
    let report = pool.install(|| compute(spec, &inputs))?;

    let mut manifest = Map::new();
    manifest.insert("command".into(), json!(spec.command.name()));
    manifest.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    manifest.insert(
        "inputs".into(),
        Value::Array(
            inputs
                .files
                .iter()
                .map(|(p, b)| json!({ "path": p.display().to_string(), "sha256": sha256_hex(b) }))
                .collect(),
        ),
    );
    manifest.insert("tolerances".into(), spec.command.tolerances());
    manifest.insert("format".into(), json!(spec.format.name()));
    manifest.insert("threads".into(), json!(threads));
    manifest.extend(report.extra);
    manifest.insert("wall_clock_ms".into(), json!(started.elapsed().as_millis() as u64));
    let manifest = Value::Object(manifest);

    match &spec.out {
        Some(out) => {
            let write = |path: &Path, text: &str| {
                fs::write(path, text).map_err(|e| RunError::Io { path: path.to_path_buf(), reason: e.to_string() })
            };
            write(out, &report.body)?;
            let mut m = String::new();
            write_value(&mut m, &manifest, 0);
            m.push('\n');
            write(&manifest_path(out), &m)?;
        }
        None => {
            print!("{}", report.body);
            eprintln!("manifest {}", compact_json(&manifest));
        }
    }
    Ok(())
}

/// Runs a job; the diagnostic line, if any, is also printed to stderr.
pub fn run_job(spec: &JobSpec) -> Outcome {
    let started = Instant::now();
    match run_inner(spec, started) {
        Ok(()) => Outcome { code: 0, diagnostic: None },
        Err(e) => {
            let outcome = e.outcome();
            if let Some(line) = &outcome.diagnostic {
                eprintln!("{line}");
            }
            outcome
        }
    }
}

/// Entry point of the binary: `--help` and `--version` print and exit 0.
pub fn main_with_args(argv: &[String]) -> i32 {
    let full = std::iter::once("trisecant".to_string()).chain(argv.iter().cloned());
    if let Err(e) = Cli::try_parse_from(full) {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            let _ = e.print();
            return 0;
        }
    }
    match parse_job(argv) {
        Ok(spec) => run_job(&spec).code,
        Err(e) => {
            eprintln!("{}", diagnostic(e.kind(), &e.to_string()));
            e.exit_code()
        }
    }
}
