//! Configuration-driven driver: one subcommand per pipeline stage, JSON/CSV
//! files as the hand-off between stages.

pub mod config;
pub mod stages;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use config::{RunConfig, SCHEMA_VERSION};
use stages::{CloseOutput, OrbitRecord, ScanOutput, SpectrumOutput};

use crate::error::{Error, ErrorKind, Result};
use crate::spectra::LyapunovSpectrum;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PIPELINE: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Numerical => EXIT_NUMERICAL,
        ErrorKind::Pipeline => EXIT_PIPELINE,
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lpflow",
    version,
    about = "Lyapunov spectra and shadowing periodic orbits of 3-d flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate the start orbit and write it as CSV.
    Simulate,
    /// Lyapunov spectrum of the linear Poincare flow along the start orbit.
    Spectrum,
    /// Domination and cone tests for the estimated splitting.
    Domination,
    /// Pesin blocks, quasi-hyperbolic strings and near returns.
    Scan,
    /// Close near returns into periodic orbits and check shadowing.
    Close {
        /// Close only this candidate.
        #[arg(long)]
        candidate: Option<usize>,
    },
    /// Compare the measure spectrum with the closed orbits.
    Compare,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(path)?;
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} threads: {e}")))?;
    fs::create_dir_all(&cli.out)?;
    pool.install(|| match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &cli.out),
        Command::Spectrum => cmd_spectrum(&cfg, &cli.out).map(drop),
        Command::Domination => cmd_domination(&cfg, &cli.out),
        Command::Scan => cmd_scan(&cfg, &cli.out).map(drop),
        Command::Close { candidate } => cmd_close(&cfg, &cli.out, candidate).map(drop),
        Command::Compare => cmd_compare(&cfg, &cli.out),
    })
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("malformed {}: {e}", path.display())))
}

fn write_csv(dir: &Path, name: &str, body: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = format!("# schema_version: {SCHEMA_VERSION}\n").into_bytes();
    body(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

/// Writes `simulate.json` and `trajectory.csv`.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = stages::setup(cfg)?;
    let (summary, traj) = stages::simulate(&s)?;
    write_json(out, "simulate.json", &summary)?;
    write_csv(out, "trajectory.csv", |w| traj.write_csv(w))
}

/// Writes `spectrum.json`.
pub fn cmd_spectrum(cfg: &RunConfig, out: &Path) -> Result<SpectrumOutput> {
    let s = stages::setup(cfg)?;
    let a = stages::analyse(&s)?;
    let doc = stages::spectrum(&s, &a)?;
    write_json(out, "spectrum.json", &doc)?;
    Ok(doc)
}

/// Writes `domination.json`.
pub fn cmd_domination(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = stages::setup(cfg)?;
    let a = stages::analyse(&s)?;
    write_json(out, "domination.json", &stages::domination(&s, &a)?)
}

/// Writes `scan.json`.
pub fn cmd_scan(cfg: &RunConfig, out: &Path) -> Result<ScanOutput> {
    let s = stages::setup(cfg)?;
    let a = stages::analyse(&s)?;
    let doc = stages::scan(&s, &a)?.output;
    write_json(out, "scan.json", &doc)?;
    Ok(doc)
}

/// Writes `close.json` and one `orbit_<id>.csv` per accepted orbit. Reuses
/// `scan.json` from `out` when present. Fails when no orbit is accepted.
pub fn cmd_close(cfg: &RunConfig, out: &Path, candidate: Option<usize>) -> Result<CloseOutput> {
    let scan_path = out.join("scan.json");
    let scan: ScanOutput = if scan_path.exists() {
        read_json(&scan_path)?
    } else {
        cmd_scan(cfg, out)?
    };
    let s = stages::setup(cfg)?;
    let doc = stages::close(&s, &scan, candidate)?;
    write_json(out, "close.json", &doc)?;
    for o in &doc.orbits {
        write_csv(out, &format!("orbit_{}.csv", o.candidate), |w| {
            o.orbit.write_csv(w)
        })?;
    }
    if doc.orbits.is_empty() {
        return Err(Error::Pipeline(format!(
            "none of {} attempted candidates closed into a shadowing orbit",
            doc.attempts.len()
        )));
    }
    Ok(doc)
}

#[derive(Deserialize)]
struct StoredPoint {
    point: Vec<f64>,
    period: f64,
}

#[derive(Deserialize)]
struct StoredOrbit {
    candidate: usize,
    orbit: StoredPoint,
    spectrum: LyapunovSpectrum,
}

#[derive(Deserialize)]
struct StoredClose {
    orbits: Vec<StoredOrbit>,
}

#[derive(Deserialize)]
struct BareExponents {
    exponents: Vec<f64>,
    #[serde(default)]
    std_errors: Option<Vec<f64>>,
}

/// A spectrum document: a full spectrum, any output with a `spectrum`
/// field, a bare `{"exponents": [...]}` object or a plain list.
fn read_spectrum(path: &Path) -> Result<LyapunovSpectrum> {
    let bad = |e: String| Error::Config(format!("malformed spectrum {}: {e}", path.display()));
    let mut value: serde_json::Value = read_json(path)?;
    if let Some(inner) = value.get_mut("spectrum") {
        value = inner.take();
    }
    if value.get("groups").is_some() {
        return serde_json::from_value::<LyapunovSpectrum>(value).map_err(|e| bad(e.to_string()));
    }
    let bare = match value {
        serde_json::Value::Array(_) => BareExponents {
            exponents: serde_json::from_value(value).map_err(|e| bad(e.to_string()))?,
            std_errors: None,
        },
        other => serde_json::from_value::<BareExponents>(other).map_err(|e| bad(e.to_string()))?,
    };
    let n = bare.exponents.len();
    LyapunovSpectrum::new(
        bare.exponents,
        bare.std_errors.unwrap_or_else(|| vec![0.0; n]),
    )
    .map_err(|e| bad(e.to_string()))
}

/// Writes `compare.json` and a text summary `compare.txt`. Uses
/// `spectrum.json` and `close.json` from `out`, running those stages when
/// missing, unless two spectrum files are configured.
pub fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = stages::setup(cfg)?;
    let m = &cfg.compare;
    let doc = if let (Some(a), Some(b)) = (&m.measure_spectrum, &m.orbit_spectrum) {
        stages::compare_files(
            &s,
            &read_spectrum(Path::new(a))?,
            &read_spectrum(Path::new(b))?,
        )?
    } else {
        let spectrum_path = out.join("spectrum.json");
        let measure = if spectrum_path.exists() {
            read_spectrum(&spectrum_path)?
        } else {
            cmd_spectrum(cfg, out)?.spectrum
        };
        let close_path = out.join("close.json");
        let orbits: Vec<OrbitRecord> = if close_path.exists() {
            let stored: StoredClose = read_json(&close_path)?;
            stored
                .orbits
                .into_iter()
                .map(|o| OrbitRecord {
                    candidate: o.candidate,
                    point: o.orbit.point,
                    period: o.orbit.period,
                    spectrum: o.spectrum,
                })
                .collect()
        } else {
            cmd_close(cfg, out, None)?
                .orbits
                .iter()
                .map(OrbitRecord::from)
                .collect()
        };
        stages::compare(&s, &measure, &orbits)?
    };
    write_json(out, "compare.json", &doc)?;
    fs::write(out.join("compare.txt"), summary(&doc))?;
    Ok(())
}

fn summary(doc: &stages::CompareOutput) -> String {
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.6}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut t = format!("schema_version: {}\n", doc.schema_version);
    t += &format!(
        "measure exponents: [{}]\n",
        fmt(&doc.measure_spectrum.exponents)
    );
    match &doc.best {
        Some(r) => {
            if let Some(c) = doc.best_candidate {
                t += &format!("best orbit: candidate {c}\n");
            }
            t += &format!("orbit exponents:   [{}]\n", fmt(&r.orbit_exponents));
            t += &format!("gaps:              [{}]\n", fmt(&r.gaps));
            t += &format!("all gaps < {}: {}\n", r.eps, r.spectrum_pass);
            if let (Some(d), Some(eps)) = (r.weak_star, r.weak_star_eps) {
                t += &format!("weak* distance: {d:.6} (< {eps}: {})\n", d < eps);
            }
        }
        None => t += "no orbit to compare\n",
    }
    for tier in &doc.tiers {
        let d = tier
            .min_weak_star
            .map_or("-".to_string(), |d| format!("{d:.6}"));
        t += &format!(
            "period <= {}: {} orbits, min weak* distance {d}\n",
            tier.max_period, tier.orbits
        );
    }
    if !doc.tiers.is_empty() {
        t += &format!("non-increasing over tiers: {}\n", doc.trend_non_increasing);
    }
    t += &format!("note: {}\n", doc.assumption);
    t
}
