//! The `ubi` command line.
//!
//! Commands talk to each other only through files in the output directory.
//! Exit codes: 0 success, 2 missing input, 3 model fit failure (single-class
//! target, separation, collinearity), 4 malformed configuration, 1 anything
//! else.

mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use crate::eval::EvalError;
use crate::features::WindowKind;
use crate::glm::GlmError;
use crate::labeling::Target;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "ubi", version, about = "Telematics driver scoring pipeline")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for splits and generation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fixed UTC offset for local-time features, e.g. +03:00.
    #[arg(long, global = true)]
    pub timezone: Option<String>,
    /// Holiday list file (one YYYY-MM-DD per line).
    #[arg(long, global = true)]
    pub holidays: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_window(s: &str) -> Result<WindowKind, String> {
    s.parse()
}

fn parse_target(s: &str) -> Result<Target, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL event log and write it back normalised.
    Parse {
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Segment trips and roll events up into hourly records.
    Aggregate {
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Compute the indicator catalog per device and window.
    Features {
        #[arg(long)]
        hourly: Option<PathBuf>,
        #[arg(long)]
        trips: Option<PathBuf>,
        #[arg(long, value_parser = parse_window)]
        window: Option<WindowKind>,
    },
    /// Classify claims by severity.
    Label {
        #[arg(long)]
        claims: Option<PathBuf>,
    },
    /// Fit the four accident models with backward elimination.
    Fit {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Raw claims, labelled on the fly instead of reading a labels file.
        #[arg(long, conflicts_with = "labels")]
        claims: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Accident probabilities for every feature row.
    Score {
        /// `paper-reference` or model JSON files; the fitted models in the
        /// output directory by default.
        #[arg(long)]
        model: Vec<String>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Premiums from scored probabilities.
    Premium {
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long, value_parser = parse_target, default_value = "any")]
        target: Target,
        #[arg(long)]
        loss: Option<f64>,
        #[arg(long)]
        admin: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// In- and out-of-sample AUC and McFadden R2 per target.
    Evaluate {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        test_fraction: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// McFadden R2 with and without a feature group.
    Ablate {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// `accel`, `speed`, or a comma-separated feature list.
        #[arg(long, default_value = "accel")]
        group: String,
    },
    /// Descriptive statistics by accident status and feature correlations.
    Report {
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_parser = parse_target, default_value = "any")]
        target: Target,
    },
    /// Generate a synthetic population with planted risk.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        weeks: Option<u32>,
        /// Drivers whose full event logs are written.
        #[arg(long, default_value_t = 50)]
        event_drivers: usize,
        #[arg(long)]
        synth_config: Option<PathBuf>,
    },
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    let fit_failure = |g: &GlmError| {
        matches!(
            g,
            GlmError::DegenerateTarget { .. } | GlmError::Separation { .. } | GlmError::Collinearity { .. }
        )
    };
    match err {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        Error::Glm(g) | Error::Eval(EvalError::Glm(g)) if fit_failure(g) => 3,
        Error::Config(_) => 4,
        _ => 1,
    }
}

/// Effective configuration: file values, then global flags.
pub fn resolve_config(cli: &Cli) -> crate::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(tz) = &cli.timezone {
        cfg.timezone = tz.clone();
    }
    if let Some(h) = &cli.holidays {
        cfg.holidays = Some(h.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and returns the artifacts it wrote.
pub fn run(cli: &Cli) -> crate::Result<Vec<PathBuf>> {
    let cfg = resolve_config(cli)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    commands::dispatch(cli, cfg)
}

/// Parses `args` (including the program name), runs, and reports. Returns
/// the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
