//! Batch front end for the `scenelift-core` geometry engine.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod manifest;
pub mod output;
pub mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tracing::level_filters::LevelFilter;

use cli::{Cli, Command, LogLevel};
use config::PipelineConfig;
use error::{CliError, CliResult};

fn init_logging(level: LogLevel) {
    let filter = match level {
        LogLevel::Error => LevelFilter::ERROR,
        LogLevel::Warn => LevelFilter::WARN,
        LogLevel::Info => LevelFilter::INFO,
        LogLevel::Debug => LevelFilter::DEBUG,
    };
    // A second initialisation (e.g. from tests) keeps the first subscriber.
    let _ = tracing_subscriber::fmt()
        .json()
        .with_max_level(filter)
        .with_current_span(false)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Effective configuration: defaults, then the config file, then flags.
fn effective_config(cli: &Cli) -> CliResult<(PipelineConfig, PathBuf)> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(d) = &cli.output_dir {
        cfg.io.output_dir = d.clone();
    }
    if let Some(f) = cli.depth_format {
        cfg.io.depth_format = f;
    }
    match &cli.command {
        Command::Lift(a) => {
            if let Some(v) = a.camera.fov_deg {
                cfg.fov_deg = v;
            }
            if let Some(v) = a.camera.fov_axis {
                cfg.fov_axis = v.into();
            }
            if let Some(v) = a.bin_deg {
                cfg.normals.bin_deg = v;
            }
        }
        Command::Annotate(a) => commands::apply_filter_flags(&mut cfg, &a.filter),
        Command::Render(a) => {
            if let Some(v) = a.fov_deg {
                cfg.fov_deg = v;
            }
            if let Some(v) = a.splat_px {
                cfg.renderer.splat_px = v;
            }
            if let Some(v) = a.depth_tol {
                cfg.renderer.depth_tol = v;
            }
        }
        Command::Evaluate(a) => {
            if let Some(v) = a.iou_thresh {
                cfg.eval.iou_thresh = v;
            }
            if a.axis_aligned {
                cfg.eval.rotated = false;
            }
            if let Some(v) = a.top_k {
                cfg.eval.top_k = v;
            }
        }
        Command::Pipeline(a) => {
            commands::apply_filter_flags(&mut cfg, &a.filter);
            if let Some(m) = &a.modes {
                cfg.renderer.pipeline_modes = m.clone();
            }
        }
        Command::PriorsCheck(_) => {}
    }
    cfg.validate()?;
    let out = cfg.io.output_dir.clone();
    Ok((cfg, out))
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let (cfg, out) = effective_config(cli)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the worker pool: {e}")))?;
    }
    if let Some(seed) = cli.seed {
        tracing::debug!(seed, "seed accepted; no stage is stochastic");
    }
    match &cli.command {
        Command::Lift(a) => commands::lift(a, &cfg, &out),
        Command::Annotate(a) => commands::annotate(a, &cfg, &out),
        Command::Render(a) => commands::render(a, &cfg, &out),
        Command::Evaluate(a) => commands::evaluate(a, &cfg, &out),
        Command::Pipeline(a) => commands::pipeline(a, &cfg, &out),
        Command::PriorsCheck(a) => {
            print!("{}", commands::priors_check(a)?);
            Ok(())
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.log_level);
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(exit_code = e.exit_code(), "{e}");
            e.exit()
        }
    }
}
