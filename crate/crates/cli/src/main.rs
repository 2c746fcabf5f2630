//! `sspde`: simulate datasets, run verification suites, export snapshots.
//!
//! stdout carries `key=value` lines, stderr carries progress and
//! diagnostics. Exit codes: 0 ok, 1 verification failure, 2 bad config or
//! request, 3 blow-up, 4 I/O or dataset integrity.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};

use sspde_core::dataset::write_dataset;
use sspde_core::pipeline::{counterterms_for, simulate_with};
use sspde_core::verify::{run_suite, Suite};
use sspde_core::{export_snapshots, Equation, Error, ExportFormat, ExportRequest, RunConfig};

#[derive(Parser)]
#[command(name = "sspde", version, about = "Singular SPDE trajectory generator")]
struct Cli {
    /// Worker threads for trajectory-parallel work (default: all cores).
    #[arg(long, global = true, env = "SSPDE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Φ⁴₂ dataset.
    SimulatePhi42(SimulateArgs),
    /// Generate a Φ⁴₃ dataset.
    SimulatePhi43(SimulateArgs),
    /// Run a self-check suite.
    Verify {
        #[arg(long, value_enum)]
        suite: SuiteArg,
        /// Config whose parameters the phi42 / phi43 suites use.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed of the Monte Carlo checks.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write 2-d slices of saved snapshots as CSV or PGM.
    ExportSnapshots {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        trajectory: u64,
        /// Comma-separated saved times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Stored field (`u`, `v`, `x` or `phi`); defaults to `u` / `phi`.
        #[arg(long)]
        field: Option<String>,
        /// Plane along the first axis for 3-d fields.
        #[arg(long, default_value_t = 0)]
        z_plane: usize,
        /// Output directory (default: <dataset>/exports).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// TOML run config (a dataset manifest also works).
    config: PathBuf,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    master_seed: Option<u64>,
    /// Overrides `n_trajectories` from the config.
    #[arg(long)]
    n_trajectories: Option<u64>,
    /// Destination directory; must be absent or empty.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Chaos,
    Phi42,
    Phi43,
    Io,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Pgm,
}

enum Failure {
    Core(Error),
    Verify,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BlowUp { .. } | Error::NonFinite(_) => 3,
        Error::Io { .. }
        | Error::Checksum { .. }
        | Error::FormatVersion { .. }
        | Error::MalformedTensor { .. }
        | Error::Manifest(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot set up {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::SimulatePhi42(args) => simulate_cmd(Equation::Phi42, &args),
        Command::SimulatePhi43(args) => simulate_cmd(Equation::Phi43, &args),
        Command::Verify { suite, config, seed } => verify_cmd(suite, config.as_deref(), seed),
        Command::ExportSnapshots {
            dataset,
            trajectory,
            times,
            format,
            field,
            z_plane,
            out,
        } => {
            let request = ExportRequest {
                trajectory,
                times,
                format: match format {
                    FormatArg::Csv => ExportFormat::Csv,
                    FormatArg::Pgm => ExportFormat::Pgm,
                },
                field,
                z_plane,
            };
            export_cmd(&dataset, &request, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify) => ExitCode::from(1),
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn ensure_empty_destination(out: &Path) -> Result<(), Error> {
    match std::fs::read_dir(out) {
        Ok(mut entries) => {
            if entries.next().is_some() {
                return Err(Error::Io {
                    path: out.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "destination is not empty"),
                });
            }
            Ok(())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(source) => Err(Error::Io {
            path: out.to_path_buf(),
            source,
        }),
    }
}

fn simulate_cmd(equation: Equation, args: &SimulateArgs) -> Result<(), Failure> {
    let config = RunConfig::from_file(&args.config)?;
    if config.equation != equation {
        return Err(Error::Config(format!(
            "{} holds a {} config, this subcommand runs {}",
            args.config.display(),
            config.equation.tag(),
            equation.tag()
        ))
        .into());
    }
    let seed = args
        .master_seed
        .or(config.master_seed)
        .ok_or_else(|| Error::Config("no master seed: pass --master-seed or set master_seed".into()))?;
    let n = args
        .n_trajectories
        .or(config.n_trajectories)
        .ok_or_else(|| Error::Config("no trajectory count: pass --n-trajectories or set n_trajectories".into()))?;
    ensure_empty_destination(&args.out)?;

    let grid = config.grid()?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "equation={}", equation.tag());
    let _ = writeln!(out, "master_seed={seed}");
    let _ = writeln!(out, "n_trajectories={n}");
    let _ = writeln!(
        out,
        "grid={}",
        grid.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
    );
    let _ = writeln!(out, "threads={}", rayon::current_num_threads());
    let counterterms = counterterms_for(&config)?;
    if let Some(ct) = &counterterms {
        let _ = writeln!(out, "c0={:?}", ct.c0);
        let _ = writeln!(out, "c11={:?}", ct.c11);
        let _ = writeln!(out, "c12={:?}", ct.c12);
        let _ = writeln!(out, "mass_shift={:?}", ct.mass_shift);
    }
    let _ = out.flush();

    let start = Instant::now();
    let last = Mutex::new(Instant::now());
    let progress = |done: usize| {
        let mut last = last.lock().expect("progress lock");
        if done as u64 == n || last.elapsed() >= Duration::from_secs(1) {
            *last = Instant::now();
            let rate = done as f64 / start.elapsed().as_secs_f64().max(1e-9);
            eprintln!("progress: {done}/{n} trajectories ({rate:.2}/s)");
        }
    };
    let (manifest, records) = simulate_with(&config, seed, n, counterterms, progress)?;
    let simulated = start.elapsed();
    let summary = write_dataset(&records, &manifest, &args.out)?;
    let total = start.elapsed();
    let _ = writeln!(out, "out={}", args.out.display());
    let _ = writeln!(out, "files={}", summary.n_files);
    let _ = writeln!(out, "bytes={}", summary.total_bytes);
    let _ = writeln!(out, "simulate_seconds={:.3}", simulated.as_secs_f64());
    let _ = writeln!(out, "total_seconds={:.3}", total.as_secs_f64());
    let _ = writeln!(
        out,
        "trajectories_per_second={:.3}",
        n as f64 / simulated.as_secs_f64().max(1e-9)
    );
    Ok(())
}

fn verify_cmd(suite: SuiteArg, config: Option<&Path>, seed: u64) -> Result<(), Failure> {
    let config = config.map(RunConfig::from_file).transpose()?;
    let suites: Vec<Suite> = match suite {
        SuiteArg::Chaos => vec![Suite::Chaos],
        SuiteArg::Phi42 => vec![Suite::Phi42],
        SuiteArg::Phi43 => vec![Suite::Phi43],
        SuiteArg::Io => vec![Suite::Io],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut out = std::io::stdout().lock();
    let mut first_failure = None;
    for s in suites {
        let report = run_suite(s, config.as_ref(), seed);
        for c in &report.checks {
            let _ = writeln!(out, "{}.{}={}", s, c.name, if c.passed { "PASS" } else { "FAIL" });
            eprintln!("{}.{}: {}", s, c.name, c.detail);
        }
        for (k, v) in &report.values {
            let _ = writeln!(out, "{s}.{k}={v}");
        }
        if first_failure.is_none() {
            first_failure = report.first_failure().map(|c| format!("{s}.{}: {}", c.name, c.detail));
        }
    }
    let _ = out.flush();
    match first_failure {
        None => Ok(()),
        Some(msg) => {
            eprintln!("first failure: {msg}");
            Err(Failure::Verify)
        }
    }
}

fn export_cmd(dataset: &Path, request: &ExportRequest, out: Option<PathBuf>) -> Result<(), Failure> {
    let out_dir = out.unwrap_or_else(|| dataset.join("exports"));
    let files = export_snapshots(dataset, request, &out_dir)?;
    let mut stdout = std::io::stdout().lock();
    for f in files {
        let _ = writeln!(stdout, "file={}", f.display());
    }
    Ok(())
}
