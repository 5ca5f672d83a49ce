use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use soc_uncertainty::harness::{self, Experiment, RunConfig};
use soc_uncertainty::{Error, Result};

/// Battery SOC estimation with analytic uncertainty: simulation,
/// Monte Carlo validation and parameter identification.
#[derive(Parser)]
#[command(name = "soc-uq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One closed-loop run; writes the per-step trace.
    Simulate(Common),
    /// `monte_carlo_n` seeded runs; writes per-step coverage and error statistics.
    MonteCarlo(Common),
    /// Final-signal uncertainty for each inter-signal rest in `rest_sweep`.
    RestSweep(Common),
    /// Genetic-algorithm fit of R0, R1, C1 tables from HPPC data.
    FitParams(Common),
    /// Writes the configured current profile.
    GenProfile(Common),
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment preset (overrides the config file).
    #[arg(long, value_enum)]
    experiment: Option<ExperimentArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    Rest,
    Freq,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Rest => Experiment::Rest,
            ExperimentArg::Freq => Experiment::Freq,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn load_config(args: &Common, fallback: Experiment) -> Result<RunConfig> {
    let over = args.experiment.map(Experiment::from);
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load_or(p, over, fallback)?,
        None => RunConfig::parse_or("", over, fallback)?,
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.out.is_some() {
        cfg.out.clone_from(&args.out);
    }
    log::info!("config hash {} (seed {})", cfg.hash(), cfg.seed);
    Ok(cfg)
}

fn stamp(buf: &mut Vec<u8>, cfg: &RunConfig) {
    buf.extend_from_slice(format!("# config_hash = {}\n# seed = {}\n", cfg.hash(), cfg.seed).as_bytes());
}

fn run(command: Command) -> Result<()> {
    let mut buf = Vec::new();
    let sink = |e: std::io::Error| Error::Io {
        path: "<buffer>".into(),
        source: e,
    };
    let cfg = match &command {
        Command::Simulate(a) => {
            let cfg = load_config(a, Experiment::Rest)?;
            report_linearization(&cfg)?;
            harness::run_single(&cfg)?.write_csv(&mut buf).map_err(sink)?;
            cfg
        }
        Command::MonteCarlo(a) => {
            let cfg = load_config(a, Experiment::Rest)?;
            report_linearization(&cfg)?;
            let rep = harness::run_monte_carlo(&cfg)?;
            let f = rep.final_step();
            log::info!(
                "final step: coverage {} debiased std {} mean u {}",
                f.coverage,
                f.debiased_std,
                f.u_mean
            );
            rep.write_csv(&mut buf).map_err(sink)?;
            cfg
        }
        Command::RestSweep(a) => {
            let cfg = load_config(a, Experiment::Freq)?;
            if cfg.experiment != Experiment::Freq {
                return Err(Error::Validation {
                    what: "experiment",
                    reason: "rest-sweep runs the freq experiment".into(),
                });
            }
            report_linearization(&cfg)?;
            let rep = harness::run_rest_sweep(&cfg, &cfg.rest_sweep)?;
            for e in &rep.entries {
                log::info!("rest {} s: start-of-final-signal u {}", e.rest_s, e.start_u());
            }
            rep.write_csv(&mut buf).map_err(sink)?;
            cfg
        }
        Command::FitParams(a) => {
            let cfg = load_config(a, Experiment::Rest)?;
            let (params, fits) = harness::fit_params(&cfg)?;
            stamp(&mut buf, &cfg);
            for f in &fits {
                writeln!(buf, "# soc {} rms_error_v = {}", f.soc_nominal, f.rms_error).map_err(sink)?;
            }
            params.write_csv(&mut buf)?;
            cfg
        }
        Command::GenProfile(a) => {
            let cfg = load_config(a, Experiment::Rest)?;
            stamp(&mut buf, &cfg);
            cfg.profile()?.write_csv(&mut buf)?;
            cfg
        }
    };
    match &cfg.out {
        Some(path) => std::fs::write(path, &buf).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => std::io::stdout().write_all(&buf).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn report_linearization(cfg: &RunConfig) -> Result<()> {
    let model = cfg.load_model()?;
    log::info!(
        "OCV linearization: slope {} /V, max SOC residual {}",
        model.curve.linear_slope(),
        model.curve.linearization_residual()
    );
    Ok(())
}
