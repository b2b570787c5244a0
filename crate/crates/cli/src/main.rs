use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edpauli::maxent::{maxent_oracle, random_problems};
use edpauli::scenario::{emit_outputs, load_config, run_scenario, RunReport, RunStatus, ScenarioConfig};
use edpauli::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_TOLERANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "edpauli", version, about = "Entropic-dynamics spin-1/2 scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory (overrides [output] directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sampler seed (overrides [sampler] seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Check a configuration without running it.
    Validate { config: PathBuf },
    /// Solve randomised maximum-entropy problems and compare with the closed form.
    Oracle {
        #[arg(long, default_value_t = 24)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Structural(_) | Error::Domain(_) => EXIT_VALIDATION,
        Error::Io(_) | Error::Json(_) => 1,
        _ => EXIT_NUMERICAL,
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, u8> {
    load_config(path).map_err(|e| {
        eprintln!("edpauli: {}: {e}", path.display());
        match e {
            Error::Io(_) => EXIT_VALIDATION,
            other => exit_for(&other),
        }
    })
}

fn print_report(report: &RunReport, dir: &Path) {
    println!("scenario {}: {:?} after {} steps", report.scenario.name(), report.status, report.steps_completed);
    if let Some(msg) = &report.failure {
        println!("  failure: {msg}");
    }
    for c in &report.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("  {verdict} {:<24} {:.3e} (threshold {:.1e})", c.name, c.value, c.threshold);
    }
    if let Some(f) = &report.larmor {
        println!("  larmor: omega {:.9} expected {:.9}", f.omega_fit, f.omega_expected);
    }
    if let Some(l) = &report.lobes {
        println!("  lobes: upper {:.4} lower {:.4} (expected {:.4} / {:.4})", l.upper, l.lower, l.expected_upper, l.expected_lower);
    }
    if let Some(r) = &report.rotation {
        let fmt = |c: [[f64; 2]; 2]| format!("({:.4}{:+.4}i, {:.4}{:+.4}i)", c[0][0], c[0][1], c[1][0], c[1][1]);
        println!("  initial spinor {}", fmt(r.initial));
        println!("  rotated spinor {}", fmt(r.rotated));
        println!("  k probabilities ({:.4}, {:.4})", r.k_probabilities[0], r.k_probabilities[1]);
    }
    println!("  outputs in {} ({:.2} s)", dir.display(), report.timings.total);
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, quiet: bool) -> Result<(), u8> {
    let mut cfg = load(config)?;
    if let Some(dir) = out {
        cfg.output.directory = dir;
    }
    if let Some(s) = seed {
        cfg.sampler.seed = s;
    }
    let report = run_scenario(&cfg).map_err(|e| {
        eprintln!("edpauli: {e}");
        exit_for(&e)
    })?;
    let dir = cfg.output.directory.clone();
    if let Err(e) = emit_outputs(&report, &cfg, &dir) {
        eprintln!("edpauli: writing {}: {e}", dir.display());
        return Err(1);
    }
    if !quiet {
        print_report(&report, &dir);
    }
    match report.status {
        RunStatus::Passed => Ok(()),
        RunStatus::Failed => Err(EXIT_TOLERANCE),
        RunStatus::Aborted => Err(EXIT_NUMERICAL),
    }
}

fn validate(config: &Path) -> Result<(), u8> {
    let cfg = load(config)?;
    println!(
        "{}: valid {} config, grid {:?} over {:?}, {} steps of dt {} (t = {})",
        config.display(),
        cfg.scenario.name(),
        cfg.grid.points,
        cfg.grid.extents,
        cfg.steps,
        cfg.params.dt,
        cfg.total_time()
    );
    Ok(())
}

fn oracle(count: usize, seed: u64) -> Result<(), u8> {
    let mut failed = 0;
    for (i, p) in random_problems(count, seed).iter().enumerate() {
        let sol = maxent_oracle(p).map_err(|e| {
            eprintln!("edpauli: problem {i}: {e}");
            exit_for(&e)
        })?;
        let r = &sol.report;
        let verdict = if r.passed() { "pass" } else { "FAIL" };
        if !r.passed() {
            failed += 1;
        }
        println!(
            "{verdict} #{i:<3} dim {} points {:>6} iterations {:>2} max rel err {:.2e} duality gap {:.1e}",
            r.dim, r.lattice_points, r.iterations, r.max_rel_error, r.duality_gap
        );
    }
    println!("{} of {count} problems within tolerance", count - failed);
    if failed > 0 {
        Err(EXIT_TOLERANCE)
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("EDPAULI_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("EDPAULI_THREADS ignored: {e}");
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, seed, quiet } => run(&config, out, seed, quiet),
        Command::Validate { config } => validate(&config),
        Command::Oracle { count, seed } => oracle(count, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
