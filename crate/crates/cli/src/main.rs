//! `isac-sim`: runs the convergence, beampattern and gain-versus-threshold
//! studies and writes their tables.
//!
//! Exit codes: 0 on success, 1 on I/O failure, 2 on a configuration or usage
//! error, 3 when at least one trial ended in a solver failure (its outputs are
//! still written). Infeasible trials are data, not errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Parser, Subcommand};
use isac_core::conic::sdpa::write_sdpa;
use isac_core::experiments::{
    run_beampattern, run_convergence, run_gain_vs_gamma, trial_channel, write_beampattern, write_convergence,
    write_gain_vs_gamma, ExperimentConfig, ResultRow, Scheme, TrialStatus,
};
use isac_core::metrics::combined_channel;
use isac_core::reflect::{build_lifted, build_lifted_sensing_only, sdr31_problem};
use isac_core::transmit::{build_sdr21, extract_transmit};
use isac_core::Error;

#[derive(Debug, Parser)]
#[command(name = "isac-sim", version, about = "Monte Carlo driver for IRS-assisted ISAC beamforming")]
struct Cli {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// First trial seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trials (seeds).
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// SNR threshold in dB; repeat to give a sweep.
    #[arg(long = "gamma-db", global = true, allow_negative_numbers = true)]
    gamma_db: Vec<f64>,
    /// Scheme to run; repeat for several.
    #[arg(long, global = true, value_parser = parse_scheme)]
    scheme: Vec<Scheme>,
    /// Output directory; each experiment writes into its own subdirectory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Objective per iteration of the proposed scheme.
    Convergence,
    /// Gain versus angle for each scheme.
    Beampattern,
    /// Minimum gain statistics over a sweep of SNR thresholds.
    GainVsGamma,
    /// Print the default configuration as TOML.
    DefaultConfig,
    /// Write the relaxations of the first trial in SDPA sparse format.
    DumpSdpa,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Error classes mapped onto exit codes.
enum Failure {
    Io(anyhow::Error),
    Config(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Io(e.into()),
            other => Failure::Config(other.into()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let Some(path) = &cli.config else {
        return Ok(ExperimentConfig::default());
    };
    let context = || format!("loading {}", path.display());
    match ExperimentConfig::load(path) {
        Ok(cfg) => Ok(cfg),
        Err(e @ Error::Io(_)) => Err(Failure::Io(anyhow::Error::from(e).context(context()))),
        Err(e) => Err(Failure::Config(anyhow::Error::from(e).context(context()))),
    }
}

fn build_config(cli: &Cli, mut cfg: ExperimentConfig) -> anyhow::Result<ExperimentConfig> {
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.run.trials = trials;
    }
    if !cli.scheme.is_empty() {
        cfg.run.schemes = cli.scheme.clone();
    }
    if let Some(out) = &cli.out {
        cfg.run.output_dir = out.clone();
    }
    match cli.command {
        Command::GainVsGamma => {
            if !cli.gamma_db.is_empty() {
                cfg.run.gamma_sweep_db = cli.gamma_db.clone();
            }
        }
        _ => match cli.gamma_db.as_slice() {
            [] => {}
            [g] => cfg.system.snr_threshold_db = *g,
            _ => bail!("this experiment takes a single --gamma-db"),
        },
    }
    if matches!(cli.command, Command::Convergence) && cfg.run.schemes.iter().any(|&s| s != Scheme::Proposed) {
        if cli.scheme.is_empty() {
            cfg.run.schemes = vec![Scheme::Proposed];
        } else {
            bail!("the convergence study runs the proposed scheme only");
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Transmit relaxation at the initial phases of the first trial, the
/// sensing-only reflection relaxation and, when the transmit relaxation is
/// solvable, the reflection relaxation at its rank-one design.
fn dump_sdpa(dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, Error> {
    std::fs::create_dir_all(dir)?;
    let params = cfg.system.params(cfg.system.snr_threshold_db)?;
    let (chan, init) = trial_channel(cfg, cfg.run.seed)?;
    let mut files = Vec::new();
    let mut dump = |name: &str, p: &isac_core::conic::ConicProblem| -> Result<(), Error> {
        let path = dir.join(name);
        write_sdpa(p, &path)?;
        files.push(path);
        Ok(())
    };
    let sdr = build_sdr21(&chan, &init, &params)?;
    dump("transmit.dat-s", &sdr.problem)?;
    dump("sensing_only.dat-s", &sdr31_problem(&build_lifted_sensing_only(&chan, &params))?)?;
    let sol = sdr.solve()?;
    if sol.is_optimal() {
        let h = combined_channel(&chan, &init)?;
        let (tx, _) = extract_transmit(&sol, &h, params.gamma)?;
        dump("reflect.dat-s", &sdr31_problem(&build_lifted(&chan, &tx, &params)?)?)?;
    }
    Ok(files)
}

fn report(files: &[PathBuf], rows: &[ResultRow]) -> bool {
    for f in files {
        println!("wrote {}", f.display());
    }
    let failures = rows.iter().filter(|r| r.status == TrialStatus::SolverFailure).count();
    let infeasible = rows.iter().filter(|r| !r.status.has_solution()).count();
    println!("{} trials, {} without a design, {} solver failures", rows.len(), infeasible, failures);
    failures > 0
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    if matches!(cli.command, Command::DefaultConfig) {
        print!("{}", ExperimentConfig::default().to_toml_string()?);
        return Ok(false);
    }
    let cfg = build_config(cli, load_config(cli)?).map_err(Failure::Config)?;
    let out = cfg.run.output_dir.clone();
    let dir = |name: &str| -> PathBuf { Path::new(&out).join(name) };
    let solver_failed = match cli.command {
        Command::Convergence => {
            let res = run_convergence(&cfg)?;
            let files = write_convergence(&dir("convergence"), &cfg, &res)?;
            println!(
                "{} of {} feasible runs converged within 15 iterations",
                (res.converged_within(15) * res.traces.len() as f64).round(),
                res.traces.len()
            );
            report(&files, &res.rows)
        }
        Command::Beampattern => {
            let res = run_beampattern(&cfg)?;
            let files = write_beampattern(&dir("beampattern"), &cfg, &res)?;
            report(&files, &res.rows)
        }
        Command::GainVsGamma => {
            let res = run_gain_vs_gamma(&cfg)?;
            let files = write_gain_vs_gamma(&dir("gain_vs_gamma"), &cfg, &res)?;
            for s in &res.summary {
                println!(
                    "{:>9} Gamma {:>5} dB: median {:>9.3} dB, infeasible {:.2}",
                    s.scheme.name(),
                    s.gamma_db,
                    s.median_min_gain_db,
                    s.infeasibility_rate
                );
            }
            report(&files, &res.rows)
        }
        Command::DumpSdpa => {
            for f in dump_sdpa(&dir("sdpa"), &cfg)? {
                println!("wrote {}", f.display());
            }
            false
        }
        Command::DefaultConfig => unreachable!("handled above"),
    };
    Ok(solver_failed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(3),
        Err(Failure::Io(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
