use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use secretary_core::negdep::verify_small_models;
use secretary_core::samples::{required_sample_size, sandwich_hits, target_grid};
use secretary_core::simulate::{lemma1_suite, run_experiment_with_workers};
use secretary_core::{optimal_decision_numbers, Distribution, Error, EstimationParams, ExperimentConfig, LimitConstants, SimulationResult};

#[derive(Parser)]
#[command(name = "secretary", version, about = "Threshold policies for the secretary problem with known distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the limit constants c and gamma.
    Constants,
    /// Print optimal decision numbers and IID-uniform thresholds as CSV.
    DecisionNumbers {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment in a JSON config and write the result with its manifest.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config trial count.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run an invariant suite; exits 1 on any violation.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Success rate against horizon for IID Uniform(0,1) draws, as CSV.
    Sweep {
        /// A single horizon or an inclusive range such as 1..10.
        #[arg(long)]
        n: String,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Lemma1,
    Negdep,
    Samples,
}

/// A suite found a counterexample.
#[derive(Debug)]
struct VerificationFailed;

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("verification failed")
    }
}

impl std::error::Error for VerificationFailed {}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    config: C,
    seed: u64,
    timestamp: u64,
    version: &'a str,
}

impl<'a, C: Serialize> RunManifest<'a, C> {
    fn new(command: &'a str, config: C, seed: u64) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self { command, config, seed, timestamp, version: env!("CARGO_PKG_VERSION") }
    }
}

#[derive(Serialize)]
struct ResultFile<'a, C: Serialize> {
    result: &'a SimulationResult,
    manifest: RunManifest<'a, C>,
}

#[derive(Serialize)]
struct SweepConfig {
    n_min: usize,
    n_max: usize,
    trials: u64,
    distribution: Distribution,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<VerificationFailed>().is_some() {
        return 1;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Size(_) | Error::InsufficientSamples { .. }) => 3,
        _ => 2,
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Constants => {
            let k = LimitConstants::compute();
            println!("c={:.10}", k.c);
            println!("gamma={:.10}", k.gamma);
            Ok(())
        }
        Command::DecisionNumbers { n, out } => decision_numbers(n, out.as_deref()),
        Command::Simulate { config, out, seed, trials, workers } => simulate(&config, &out, seed, trials, workers),
        Command::Verify { suite, seed, workers } => verify(suite, seed, workers),
        Command::Sweep { n, trials, seed, out, workers } => sweep(&n, trials, seed, out.as_deref(), workers),
    }
}

/// Twelve significant digits, shortest form, no exponent.
fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn decision_numbers(n: u64, out: Option<&Path>) -> anyhow::Result<()> {
    if n < 1 {
        bail!(Error::Usage("n must be at least 1".into()));
    }
    let d = optimal_decision_numbers(n as usize)?;
    let mut csv = String::from("i,d,tau\n");
    for (i, &di) in d.values().iter().enumerate() {
        // For IID Uniform(0,1) the threshold equals the decision number.
        writeln!(csv, "{},{},{}", i + 1, fmt12(di), fmt12(di))?;
    }
    emit(&csv, out)
}

fn load_config(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))?;
    if let Some(csv) = &config.samples_csv {
        if csv.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            config.samples_csv = Some(base.join(csv));
        }
    }
    Ok(config)
}

fn simulate(config_path: &Path, out: &Path, seed: Option<u64>, trials: Option<u64>, workers: Option<usize>) -> anyhow::Result<()> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(trials) = trials {
        config.trials = trials;
    }
    let result = run_experiment_with_workers(&config, workers)?;
    let file = ResultFile { result: &result, manifest: RunManifest::new("simulate", &config, config.seed) };
    let json = serde_json::to_string_pretty(&file)? + "\n";
    emit(&json, Some(out))?;
    println!("rate={} stderr={} reference={}", fmt12(result.rate), fmt12(result.std_error), fmt12(result.reference_bound));
    Ok(())
}

fn report(name: &str, checks: u64, violations: &[String]) -> anyhow::Result<()> {
    for v in violations {
        println!("VIOLATION {v}");
    }
    if violations.is_empty() {
        println!("{name}: pass ({checks} checks)");
        Ok(())
    } else {
        println!("{name}: FAIL ({} of {checks} checks)", violations.len());
        Err(VerificationFailed.into())
    }
}

fn verify(suite: Suite, seed: u64, workers: Option<usize>) -> anyhow::Result<()> {
    match suite {
        Suite::Lemma1 => {
            let (checks, violations) = lemma1_suite(100, 10, seed)?;
            report("lemma1", checks, &violations)
        }
        Suite::Negdep => {
            let r = verify_small_models(6, 4)?;
            report("negdep", r.checks, &r.violations)
        }
        Suite::Samples => {
            const REPETITIONS: u64 = 200;
            let params = EstimationParams::new(0.1, 0.1, 0.05)?;
            let m = required_sample_size(&params);
            let grid = target_grid(params.delta, 20);
            let uniform = Distribution::uniform(0.0, 1.0)?;
            let hits = sandwich_hits(&uniform, &params, &grid, m, REPETITIONS, seed, workers)?;
            let rate = hits as f64 / REPETITIONS as f64;
            println!("sandwich hit-rate={rate} ({hits}/{REPETITIONS}, m={m}, eps=0.1, delta=0.1, eta=0.05, seed={seed})");
            if rate >= 0.9 {
                println!("samples: pass");
                Ok(())
            } else {
                println!("samples: FAIL (hit-rate below 0.9)");
                Err(VerificationFailed.into())
            }
        }
    }
}

fn parse_range(spec: &str) -> anyhow::Result<(usize, usize)> {
    let usage = || anyhow!(Error::Usage(format!("expected N or A..B with 1 <= A <= B, got {spec:?}")));
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| usage());
    let (lo, hi) = match spec.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
        None => {
            let n = parse(spec)?;
            (n, n)
        }
    };
    if lo < 1 || lo > hi {
        return Err(usage());
    }
    Ok((lo, hi))
}

fn sweep(range: &str, trials: u64, seed: u64, out: Option<&Path>, workers: Option<usize>) -> anyhow::Result<()> {
    let (lo, hi) = parse_range(range)?;
    let gamma = LimitConstants::compute().gamma;
    let uniform = Distribution::uniform(0.0, 1.0)?;
    let mut csv = String::from("n,rate,stderr,formula,gamma\n");
    for n in lo..=hi {
        let config = ExperimentConfig::full_knowledge(vec![uniform.clone(); n], trials, seed);
        let r = run_experiment_with_workers(&config, workers)?;
        writeln!(csv, "{n},{},{},{},{}", fmt12(r.rate), fmt12(r.std_error), fmt12(r.reference_bound), fmt12(gamma))?;
    }
    emit(&csv, out)?;
    if let Some(path) = out {
        let config = SweepConfig { n_min: lo, n_max: hi, trials, distribution: uniform };
        let manifest = serde_json::to_string_pretty(&RunManifest::new("sweep", config, seed))? + "\n";
        let mut sidecar = path.as_os_str().to_owned();
        sidecar.push(".manifest.json");
        emit(&manifest, Some(Path::new(&sidecar)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(1.0), "1");
        assert_eq!(fmt12(0.5), "0.5");
        assert_eq!(fmt12(0.684292512755988), "0.684292512756");
        assert_eq!(fmt12(1.0 / 3.0), "0.333333333333");
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..10").unwrap(), (1, 10));
        assert_eq!(parse_range("3..=5").unwrap(), (3, 5));
        assert_eq!(parse_range("7").unwrap(), (7, 7));
        assert!(parse_range("0..3").is_err());
        assert!(parse_range("5..2").is_err());
        assert!(parse_range("x").is_err());
    }
}
