//! `chldp`: experiments for the discretized stochastic Cahn-Hilliard
//! equation and its one-point rate function.
//!
//! Exit status: 0 on success, 2 on configuration errors, 3 on numerical
//! failures.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use output::Table;

#[derive(Parser)]
#[command(name = "chldp", version, about = "Small-noise Cahn-Hilliard: simulation, rate function, checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate paths of the discrete SPDE.
    Simulate {
        /// Write every time slice, not just the terminal state.
        #[arg(long)]
        full_path: bool,
        #[arg(long)]
        paths: Option<usize>,
    },
    /// Compute I^n(y) for y or a list of levels.
    Rate {
        /// Also write the minimizing path and control as binary containers.
        #[arg(long)]
        dump: bool,
    },
    /// I^n(y) along the n list.
    Converge,
    /// Monte Carlo check of -eps ln P against the rate function.
    McVerify {
        /// Plain Monte Carlo instead of importance sampling.
        #[arg(long)]
        no_importance: bool,
    },
    /// Green function error rates.
    GreenCheck,
    /// Scan the coefficients against the standing assumptions.
    Validate,
    /// Operator identity and inequality property suites.
    Props,
}

pub enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
    /// A report that was written before the run was judged a failure.
    WithTables(Box<Failure>, Vec<Table>),
}

impl Failure {
    fn with_tables(self, tables: Vec<Table>) -> Self {
        Failure::WithTables(Box::new(self), tables)
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
            Failure::WithTables(f, _) => f.code(),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(e) => format!("configuration error: {e:#}"),
            Failure::Numerical(e) => format!("numerical failure: {e:#}"),
            Failure::WithTables(f, _) => f.message(),
        }
    }
}

impl From<chldp::Error> for Failure {
    fn from(e: chldp::Error) -> Self {
        match e {
            chldp::Error::InvalidArgument(_) => Failure::Config(e.into()),
            _ => Failure::Numerical(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Numerical(e)
    }
}

fn run(cli: Cli) -> Result<(commands::Outcome, ExperimentConfig), (Failure, Option<ExperimentConfig>)> {
    let mut cfg = ExperimentConfig::load(&cli.overrides).map_err(|e| (Failure::Config(e), None))?;
    let validate_only = matches!(cli.command, Command::Validate);
    match &cli.command {
        Command::Simulate { full_path, paths } => {
            cfg.simulate.full_path |= full_path;
            if let Some(p) = paths {
                cfg.simulate.paths = *p;
            }
        }
        Command::McVerify { no_importance: true } => cfg.mc.importance = false,
        _ => {}
    }
    let pre = if validate_only {
        cfg.check().map_err(Failure::Config)
    } else {
        commands::precheck(&cfg)
    };
    pre.map_err(|f| (f, Some(cfg.clone())))?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| (Failure::Config(e.into()), Some(cfg.clone())))?;
    }
    let out = match cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg),
        Command::Rate { dump } => commands::rate(&cfg, dump),
        Command::Converge => commands::converge(&cfg),
        Command::McVerify { .. } => commands::mc_verify(&cfg),
        Command::GreenCheck => commands::green_check(&cfg, cli.overrides.n_list.is_some()),
        Command::Validate => commands::validate(&cfg),
        Command::Props => commands::props(&cfg),
    };
    match out {
        Ok(o) => Ok((o, cfg)),
        Err(f) => Err((f, Some(cfg))),
    }
}

fn write_tables(cfg: &ExperimentConfig, tables: &[Table]) -> anyhow::Result<()> {
    let dir = cfg.out_dir();
    for t in tables {
        println!("wrote {}", t.write(&dir)?.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((out, cfg)) => {
            let dir = cfg.out_dir();
            let written = write_tables(&cfg, &out.tables).and_then(|_| {
                for (name, bytes) in &out.blobs {
                    std::fs::write(dir.join(name), bytes)?;
                    println!("wrote {}", dir.join(name).display());
                }
                Ok(())
            });
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            println!("{}", out.summary);
            ExitCode::SUCCESS
        }
        Err((f, cfg)) => {
            if let (Failure::WithTables(_, tables), Some(cfg)) = (&f, &cfg) {
                if let Err(e) = write_tables(cfg, tables) {
                    eprintln!("error: {e:#}");
                }
            }
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
