//! `fshawkes` command-line interface.
//!
//! Exit codes: 0 on success, 1 when a command fails (bad input file,
//! numerical failure), 2 on usage errors.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use fshawkes::evaluation::fit_report;
use fshawkes::io::report::{format_fit_report, format_influence, format_qq, format_trace};
use fshawkes::io::{format_events, read_events, PosteriorFile, RunConfig};
use fshawkes::{run_gibbs, run_meanfield, simulate, ExecPolicy, Realization};

#[derive(Parser, Debug)]
#[command(
    name = "fshawkes",
    version,
    about = "Flexible state-switching Hawkes processes"
)]
struct Cli {
    /// Random seed; overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run configuration (TOML); `-` reads standard input.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output file; standard output when omitted or `-`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for the fitting commands; 1 runs sequentially.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the simulation fixture config.
    Fixture,
    /// Simulate events from the [model] section of the config.
    Simulate {
        /// Overrides the configured horizon.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Gibbs sampler; writes the thinned post-burn-in samples.
    FitGibbs {
        #[arg(long, value_name = "PATH")]
        events: PathBuf,
        /// Also write the per-iteration training log-likelihood.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Mean-field variational inference; writes the factors and posterior draws.
    FitMf {
        #[arg(long, value_name = "PATH")]
        events: PathBuf,
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Log-likelihood and KS tests of a posterior (at its mean) on events.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        events: PathBuf,
        #[arg(long, value_name = "PATH")]
        posterior: PathBuf,
        /// Also write the influence curves of the posterior mean.
        #[arg(long, value_name = "PATH")]
        influence: Option<PathBuf>,
    },
    /// Q-Q plot data of the rescaled interarrival times.
    Qq {
        #[arg(long, value_name = "PATH")]
        events: PathBuf,
        #[arg(long, value_name = "PATH")]
        posterior: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // prints help/version on stdout with code 0, usage errors with code 2
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("FSHAWKES_LOG")
        .init();

    if !matches!(cli.command, Command::Fixture) && cli.config.is_none() {
        eprintln!("error: this command needs --config <PATH>");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn exec_policy(threads: Option<usize>) -> Result<ExecPolicy> {
    match threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(1) => Ok(ExecPolicy::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
            Ok(ExecPolicy::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            warn!("built without the `parallel` feature; running sequentially");
            Ok(ExecPolicy::Sequential)
        }
        None if cfg!(feature = "parallel") => Ok(ExecPolicy::Parallel),
        None => Ok(ExecPolicy::Sequential),
    }
}

fn is_stdio(path: &Path) -> bool {
    path.as_os_str() == "-"
}

fn read_input(path: &Path) -> Result<String> {
    let mut text = String::new();
    if is_stdio(path) {
        std::io::stdin()
            .read_to_string(&mut text)
            .context("reading standard input")?;
    } else {
        text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    }
    Ok(text)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) if !is_stdio(p) => {
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        _ => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_deref().expect("checked in main");
    let text = read_input(path)?;
    let mut cfg = RunConfig::from_toml(&text)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_events(path: &Path) -> Result<Realization> {
    let data = if is_stdio(path) {
        read_events(std::io::stdin().lock(), Path::new("<stdin>"))?
    } else {
        fshawkes::io::load_events(path)?
    };
    info!(
        "loaded {} events, M = {}, K = {}, T = {}",
        data.len(),
        data.dims(),
        data.states(),
        data.horizon()
    );
    Ok(data)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fixture => {
            let mut cfg = RunConfig::fixture();
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            write_output(cli.out.as_deref(), &cfg.to_toml())
        }
        Command::Simulate { horizon } => {
            let mut cfg = load_config(&cli)?;
            if horizon.is_some() {
                cfg.horizon = *horizon;
            }
            let data = simulate(&cfg.sim_config()?)?;
            info!("simulated {} events", data.len());
            write_output(cli.out.as_deref(), &format_events(&data))
        }
        Command::FitGibbs { events, trace } => {
            let cfg = load_config(&cli)?;
            let exec = exec_policy(cli.threads)?;
            let data = load_events(events)?;
            let priors = cfg.priors(data.states())?;
            let chain = run_gibbs(&data, &cfg.basis_set()?, &priors, &cfg.gibbs_options(exec))?;
            info!("kept {} samples", chain.samples.len());
            if let Some(path) = trace {
                write_output(Some(path), &format_trace(&chain.loglik_trace))?;
            }
            let file = PosteriorFile::gibbs(chain.samples, &cfg.hash())?;
            write_output(cli.out.as_deref(), &file.to_csv())
        }
        Command::FitMf { events, trace } => {
            let cfg = load_config(&cli)?;
            let exec = exec_policy(cli.threads)?;
            let data = load_events(events)?;
            let priors = cfg.priors(data.states())?;
            let fit = run_meanfield(&data, &cfg.basis_set()?, &priors, &cfg.mf_options(exec))?;
            if fit.converged {
                info!("converged after {} iterations", fit.iterations);
            } else {
                warn!(
                    "stopped at the iteration budget ({}) before converging",
                    fit.iterations
                );
            }
            if let Some(path) = trace {
                write_output(Some(path), &format_trace(&fit.loglik_trace))?;
            }
            let file = PosteriorFile::mean_field(&fit.state, fit.draws, &cfg.hash());
            write_output(cli.out.as_deref(), &file.to_csv())
        }
        Command::Evaluate {
            events,
            posterior,
            influence,
        } => {
            let (cfg, data, post) = evaluation_inputs(&cli, events, posterior)?;
            let basis = cfg.basis_set()?;
            let mean = post.posterior_mean()?;
            let report = fit_report(
                &mean,
                &basis,
                &data,
                cfg.solver.eval_nodes,
                exec_policy(cli.threads)?,
            )?;
            if let Some(path) = influence {
                write_output(Some(path), &format_influence(&mean, &basis, 601)?)?;
            }
            write_output(cli.out.as_deref(), &format_fit_report(&report, data.len()))
        }
        Command::Qq { events, posterior } => {
            let (cfg, data, post) = evaluation_inputs(&cli, events, posterior)?;
            let mean = post.posterior_mean()?;
            let report = fit_report(
                &mean,
                &cfg.basis_set()?,
                &data,
                cfg.solver.eval_nodes,
                exec_policy(cli.threads)?,
            )?;
            write_output(cli.out.as_deref(), &format_qq(&report))
        }
    }
}

fn evaluation_inputs(
    cli: &Cli,
    events: &Path,
    posterior: &Path,
) -> Result<(RunConfig, Realization, PosteriorFile)> {
    let cfg = load_config(cli)?;
    let data = load_events(events)?;
    let post = PosteriorFile::load(posterior)?;
    if !post.config_hash.is_empty() && post.config_hash != cfg.hash() {
        warn!(
            "posterior was fitted with config {} but evaluated with {}",
            post.config_hash,
            cfg.hash()
        );
    }
    if post.dims != data.dims() || post.states != data.states() {
        bail!(
            "posterior has M = {}, K = {} but the events have M = {}, K = {}",
            post.dims,
            post.states,
            data.dims(),
            data.states()
        );
    }
    Ok((cfg, data, post))
}
