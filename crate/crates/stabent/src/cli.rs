use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::{self, Outcome, Series};
use crate::config::ExperimentConfig;
use crate::demos;
use crate::experiment::Experiment;
use crate::parallel::Pool;

/// Exit status when a check completed and failed.
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stabent", version, about = "Practical-stabilization entropy experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "demo")]
    pub config: Option<PathBuf>,
    /// Built-in demo instead of a config file.
    #[arg(long, global = true, value_name = "NAME")]
    pub demo: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    pub jobs: usize,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Dump one closed-loop trajectory.
    Simulate,
    /// Spanning counts per horizon and the fitted entropy rate.
    Entropy,
    /// Lower and upper entropy bounds.
    Bounds,
    /// Feedback entropy from seed points of the grid.
    FbEntropy,
    /// Gain search or overshoot fit.
    Synth,
    /// Practical-stability margins of the closed loop on the grid.
    Verify,
    /// Equilibrium sweep over log-spaced gains.
    Sweep,
    /// Strict spanning rate with doubled envelope against the feedback rate.
    Check42,
    /// Two-column data for one figure.
    Plot {
        #[arg(long, value_enum, default_value_t = Series::Entropy)]
        series: Series,
    },
    /// List the built-in demos; with --out, also write their configs.
    Demos,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Entropy => "entropy",
            Command::Bounds => "bounds",
            Command::FbEntropy => "fb-entropy",
            Command::Synth => "synth",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
            Command::Check42 => "check42",
            Command::Plot { .. } => "plot",
            Command::Demos => "demos",
        }
    }
}

/// Runs an experiment command in memory.
pub fn execute(command: &Command, cfg: &ExperimentConfig, jobs: usize) -> Result<Outcome> {
    let pool = Pool::new(jobs)?;
    let e = Experiment::resolve(cfg, &pool)?;
    match command {
        Command::Simulate => commands::simulate(&e, &pool),
        Command::Entropy => commands::entropy(&e, &pool),
        Command::Bounds => commands::bounds(&e, &pool),
        Command::FbEntropy => commands::fb_entropy(&e, &pool),
        Command::Synth => commands::synth(&e, &pool),
        Command::Verify => commands::verify(&e, &pool),
        Command::Sweep => commands::sweep(&e, &pool),
        Command::Check42 => commands::check42(&e, &pool),
        Command::Plot { series } => commands::plot(&e, *series, &pool),
        Command::Demos => bail!("demos takes no experiment"),
    }
}

pub fn load_config(config: Option<&Path>, demo: Option<&str>) -> Result<ExperimentConfig> {
    match (config, demo) {
        (Some(p), None) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("in {}", p.display()))
        }
        (None, Some(name)) => demos::config(name),
        (None, None) => bail!("pass --config PATH or --demo NAME"),
        (Some(_), Some(_)) => bail!("--config and --demo are exclusive"),
    }
}

fn write(dir: &Path, out: &Outcome) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in &out.artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::Demos = cli.command {
        for name in demos::names() {
            println!("{name}");
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(format!("{name}.toml")), demos::source(name).expect("listed"))?;
            }
        }
        return Ok(true);
    }
    let cfg = load_config(cli.config.as_deref(), cli.demo.as_deref())?;
    let out = execute(&cli.command, &cfg, cli.jobs)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("stabent-out"));
    write(&dir, &out)?;
    println!("{}", out.summary);
    Ok(out.passed)
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
