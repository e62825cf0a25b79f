//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code: 0 success, 1 failed property check,
//! 2 input or usage error, 3 internal inconsistency.

mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::distance::{bures_e_distance, ecd_distance, ecd_norm_cp, DistanceConfig, DistanceReport};
use crate::energy::EnergyObservable;
use crate::enorm::e_norm;
use crate::error::Error;
use crate::io;
use crate::truncate::{study_csv, TruncationStudy};

pub use verify::{check_names, run_suites, CheckOutcome, Fault, Suite};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest admissible `lower - upper` in a distance report.
pub const REPORT_TOL: f64 = 1e-7;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ecdkit", version, about = "Energy-constrained operator norms and channel distances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// E-norm of an operator at one energy or over a grid, as CSV rows
    /// `E,value,mu,gap`.
    Enorm(EnormArgs),
    /// Exact ECD norm of one CP map, or an estimated distance between two.
    Ecd(EcdArgs),
    /// Run the property suites on sampled instances.
    Verify(VerifyArgs),
    /// Truncation study of a dilation, as CSV.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
struct EnormArgs {
    /// Operator matrix JSON.
    operator: PathBuf,
    /// Energy observable JSON.
    observable: PathBuf,
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    energy: Option<f64>,
    /// Evenly spaced energies `lo:hi:n`.
    #[arg(long)]
    grid: Option<String>,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 32)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

#[derive(Debug, Args)]
struct EcdArgs {
    /// First map (Kraus `ops` or dilation `v`).
    phi: PathBuf,
    /// Second map; omit for the norm of `phi`.
    psi: Option<PathBuf>,
    #[arg(long)]
    observable: PathBuf,
    #[arg(long)]
    energy: f64,
    /// Energy-constrained Bures distance instead of the ECD distance.
    #[arg(long)]
    bures: bool,
    #[command(flatten)]
    run: RunFlags,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sampled instances per check.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<Fault>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Scenario JSON: dilation, observable, energy, optional schedule and config.
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: EXIT_INPUT, message: e.to_string() }
    }
}

fn input_err(message: String) -> Failure {
    Failure { code: EXIT_INPUT, message }
}

/// Provenance embedded in every JSON output.
#[derive(Debug, Serialize)]
struct Meta {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
}

#[derive(Debug, Serialize)]
struct InputDigest {
    role: &'static str,
    sha256: String,
}

struct Input {
    text: String,
    digest: InputDigest,
}

fn read_input(role: &'static str, path: &Path) -> Result<Input, Failure> {
    let bytes = std::fs::read(path).map_err(|e| input_err(format!("{role} {}: {e}", path.display())))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| input_err(format!("{role} {}: not UTF-8", path.display())))?;
    Ok(Input { text, digest: InputDigest { role, sha256 } })
}

fn context<T>(what: &str, path: &Path, r: crate::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| input_err(format!("{what} {}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, body: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| input_err(format!("output {}: {e}", p.display()))),
        None => stdout
            .write_all(body.as_bytes())
            .map_err(|e| Failure { code: EXIT_INTERNAL, message: format!("stdout: {e}") }),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

/// Caps the global rayon pool when `ECDKIT_THREADS` is set.
fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("ECDKIT_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| input_err(format!("ECDKIT_THREADS must be a positive integer, got `{raw}`")))?;
    // a pool built earlier in the process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs the tool on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Enorm(a) => cmd_enorm(a, stdout),
        Command::Ecd(a) => cmd_ecd(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Study(a) => cmd_study(a, stdout),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

#[derive(Debug, Serialize)]
struct EnormRow {
    energy: f64,
    value: f64,
    mu: f64,
    gap: f64,
    primal_value: f64,
    dual_value: f64,
}

#[derive(Debug, Serialize)]
struct EnormOutput {
    meta: Meta,
    rows: Vec<EnormRow>,
}

fn cmd_enorm(a: EnormArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let op_in = read_input("operator", &a.operator)?;
    let obs_in = read_input("observable", &a.observable)?;
    let op = context("operator", &a.operator, io::parse_matrix(&op_in.text))?;
    let g = context("observable", &a.observable, io::parse_observable(&obs_in.text))?;
    let energies = match (&a.grid, a.energy) {
        (Some(spec), _) => io::parse_grid(spec)?,
        (None, Some(e)) => vec![e],
        (None, None) => return Err(input_err("one of --energy or --grid is required".into())),
    };
    let rows = energies
        .iter()
        .map(|&e| {
            let c = e_norm(&op, &g, e)?;
            Ok(EnormRow {
                energy: e,
                value: c.value,
                mu: c.mu,
                gap: c.gap,
                primal_value: c.primal_value,
                dual_value: c.dual_value,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let body = if a.json {
        let meta = Meta {
            tool: "ecdkit",
            version: VERSION,
            command: "enorm",
            seed: None,
            inputs: vec![op_in.digest, obs_in.digest],
        };
        to_json(&EnormOutput { meta, rows })
    } else {
        let mut s = String::from("E,value,mu,gap\n");
        for r in &rows {
            s.push_str(&format!("{:?},{:?},{:?},{:?}\n", r.energy, r.value, r.mu, r.gap));
        }
        s
    };
    emit(&a.out, stdout, &body)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct NormOutput {
    meta: Meta,
    kind: &'static str,
    energy: f64,
    value: f64,
    mu: f64,
    gap: f64,
    primal_value: f64,
    dual_value: f64,
}

#[derive(Debug, Serialize)]
struct DistanceOutput {
    meta: Meta,
    kind: &'static str,
    energy: f64,
    config: DistanceConfig,
    report: DistanceReport,
}

fn cmd_ecd(a: EcdArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let phi_in = read_input("phi", &a.phi)?;
    let obs_in = read_input("observable", &a.observable)?;
    let phi = context("phi", &a.phi, io::parse_map(&phi_in.text))?;
    let g: EnergyObservable = context("observable", &a.observable, io::parse_observable(&obs_in.text))?;
    let cfg = DistanceConfig {
        restarts: a.run.restarts,
        max_iter: a.run.max_iter,
        tol: a.run.tol,
        seed: a.run.seed,
        ..Default::default()
    };
    cfg.validate()?;
    let Some(psi_path) = &a.psi else {
        if a.bures {
            return Err(input_err("--bures needs two maps".into()));
        }
        let c = ecd_norm_cp(&phi, &g, a.energy)?;
        let meta = Meta {
            tool: "ecdkit",
            version: VERSION,
            command: "ecd",
            seed: Some(cfg.seed),
            inputs: vec![phi_in.digest, obs_in.digest],
        };
        let out = NormOutput {
            meta,
            kind: "ecd_norm_cp",
            energy: a.energy,
            value: c.value,
            mu: c.mu,
            gap: c.gap,
            primal_value: c.primal_value,
            dual_value: c.dual_value,
        };
        emit(&a.out, stdout, &to_json(&out))?;
        return Ok(EXIT_OK);
    };
    let psi_in = read_input("psi", psi_path)?;
    let psi = context("psi", psi_path, io::parse_map(&psi_in.text))?;
    let (kind, report) = if a.bures {
        ("bures_e_distance", bures_e_distance(&phi, &psi, &g, a.energy, &cfg)?)
    } else {
        ("ecd_distance", ecd_distance(&phi, &psi, &g, a.energy, &cfg)?)
    };
    let inconsistent = report.lower > report.upper + REPORT_TOL;
    let meta = Meta {
        tool: "ecdkit",
        version: VERSION,
        command: "ecd",
        seed: Some(cfg.seed),
        inputs: vec![phi_in.digest, psi_in.digest, obs_in.digest],
    };
    let out = DistanceOutput { meta, kind, energy: a.energy, config: cfg, report };
    emit(&a.out, stdout, &to_json(&out))?;
    if inconsistent {
        return Err(Failure {
            code: EXIT_INTERNAL,
            message: format!("lower bound {} exceeds upper bound {}", out.report.lower, out.report.upper),
        });
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: VerifyArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let trials = usize::try_from(a.trials).map_err(|_| input_err("--trials too large".into()))?;
    let outcomes = run_suites(a.suite, a.seed, trials, a.inject_fault);
    let mut body = format!("ecdkit verify {VERSION} suite={} seed={} trials={}\n", a.suite.name(), a.seed, trials);
    let mut failed = 0;
    for o in &outcomes {
        if o.failures == 0 {
            body.push_str(&format!("PASS {} ({} trials)\n", o.name, o.trials));
        } else {
            failed += 1;
            body.push_str(&format!("FAIL {} ({} of {} trials failed)\n", o.name, o.failures, o.trials));
            if let Some(inst) = &o.instance {
                body.push_str(&format!("  instance: {}\n", serde_json::to_string(inst).expect("json value")));
            }
        }
    }
    body.push_str(&format!("summary: {} checks, {} failed\n", outcomes.len(), failed));
    emit(&a.out, stdout, &body)?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_PROPERTY })
}

fn cmd_study(a: StudyArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let input = read_input("scenario", &a.scenario)?;
    let mut sc = context("scenario", &a.scenario, io::parse_scenario(&input.text))?;
    if let Some(seed) = a.seed {
        sc.config.seed = seed;
    }
    let study = TruncationStudy::new(sc.dilation, sc.observable, sc.energy, sc.schedule, sc.config)?;
    let rows = study.run()?;
    emit(&a.out, stdout, &study_csv(&rows))?;
    Ok(EXIT_OK)
}
