use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use steady_ie_cli::{
    load_report, parse_chain, parse_enum, parse_metric, parse_modes, parse_omega, report_tables, run, RunConfig,
};

/// Periodic steady states of forced nonlinear mechanical systems.
#[derive(Parser)]
#[command(name = "steady-ie", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the forcing frequency and write response curves.
    Run(Box<RunArgs>),
    /// Print time and iteration tables from a run report.
    Tables {
        /// Path to a report.json written by `run`.
        report: PathBuf,
    },
}

/// Every flag overrides the corresponding entry of `--config`.
#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model file (JSON).
    #[arg(long, conflicts_with = "chain")]
    model: Option<PathBuf>,
    /// Builtin chain `n,m,k,c,kappa`.
    #[arg(long)]
    chain: Option<String>,
    /// Retained modes, e.g. `1,2,3` or `1-20`.
    #[arg(long)]
    modes: Option<String>,
    /// Frequency grid `start:end:steps`.
    #[arg(long)]
    omega: Option<String>,
    /// Forcing amplitudes (comma separated or repeated).
    #[arg(long = "force-amp", value_delimiter = ',')]
    force_amp: Vec<f64>,
    /// Collocation nodes per period.
    #[arg(long = "N")]
    n_nodes: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// picard_then_newton | picard_only | newton_only
    #[arg(long)]
    strategy: Option<String>,
    /// reformulated | original | both
    #[arg(long)]
    formulation: Option<String>,
    /// up | down | both
    #[arg(long)]
    direction: Option<String>,
    /// max_abs_all_dofs | max_abs_dof:i
    #[arg(long)]
    metric: Option<String>,
    /// Evaluate the contraction check at every point.
    #[arg(long)]
    contraction: bool,
    /// Cold-start every frequency.
    #[arg(long)]
    no_warm_start: bool,
    /// Verify off-resonant points by time integration.
    #[arg(long)]
    oracle_check: bool,
    #[arg(long)]
    oracle_points: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the gnuplot data file.
    #[arg(long)]
    no_plot: bool,
    /// Do not print the summary tables.
    #[arg(long)]
    quiet: bool,
}

impl RunArgs {
    fn into_config(self) -> Result<(RunConfig, bool)> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(path) = self.model {
            cfg.model = Some(path);
            cfg.chain = None;
        }
        if let Some(s) = &self.chain {
            cfg.chain = Some(parse_chain(s)?);
            cfg.model = None;
        }
        if let Some(s) = &self.modes {
            cfg.modes = Some(parse_modes(s)?);
        }
        if let Some(s) = &self.omega {
            (cfg.omega_start, cfg.omega_end, cfg.steps) = parse_omega(s)?;
        }
        if !self.force_amp.is_empty() {
            cfg.force_amps = self.force_amp;
        }
        if let Some(n) = self.n_nodes {
            cfg.n_nodes = n;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(s) = &self.strategy {
            cfg.strategy = parse_enum(s)?;
        }
        if let Some(s) = &self.formulation {
            cfg.formulation = parse_enum(s)?;
        }
        if let Some(s) = &self.direction {
            cfg.direction = parse_enum(s)?;
        }
        if let Some(s) = &self.metric {
            cfg.metric = parse_metric(s)?;
        }
        cfg.contraction |= self.contraction;
        cfg.warm_start &= !self.no_warm_start;
        cfg.oracle_check |= self.oracle_check;
        if let Some(k) = self.oracle_points {
            cfg.oracle_points = k;
        }
        if let Some(out) = self.out {
            cfg.out = out;
        }
        cfg.plot &= !self.no_plot;
        Ok((cfg, self.quiet))
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let (cfg, quiet) = args.into_config()?;
            let report = run(&cfg)?;
            if !quiet {
                print!("{}", report_tables(&report));
                println!("results written to {}", cfg.out.display());
            }
        }
        Command::Tables { report } => print!("{}", report_tables(&load_report(&report)?)),
    }
    Ok(())
}
