//! `vigil` — replay traces through the streaming engine, sweep ablation
//! grids, validate trace files, and generate synthetic traces.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use vigil_core::harness::{
    ablation_sweep, emit_report, gen_trace, load_trace, load_trace_dir, run_suite, ConfigGrid,
    GenParams, HarnessConfig, ReportFormat, ReportPayload, TraceIssue,
};

#[derive(Parser)]
#[command(
    name = "vigil",
    version,
    about = "Streaming scene-graph trigger engine harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Replay one trace and score it against its ground truth.
    Run {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
    },
    /// Run an ablation grid over every trace in a directory.
    Sweep {
        #[arg(long)]
        traces: PathBuf,
        /// Grid file: JSON with any of guidance_mode, embed_mode, k.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
    },
    /// Validate a trace file, printing line-numbered issues.
    Validate {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Generate a synthetic trace.
    GenTrace {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        frames: u64,
        /// Clip window the generation records are keyed to.
        #[arg(long, default_value_t = 4)]
        window: u32,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn print_issues(issues: &[TraceIssue]) {
    for issue in issues {
        eprintln!("{issue}");
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<HarnessConfig> {
    match path {
        Some(path) => {
            HarnessConfig::load(path).with_context(|| format!("loading config {}", path.display()))
        }
        None => Ok(HarnessConfig::default()),
    }
}

fn write_output(content: &str, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(path) => {
            std::fs::write(path, content).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run {
            trace,
            config,
            report,
            format,
        } => {
            let loaded = match load_trace(&trace) {
                Ok(trace) => trace,
                Err(issues) => {
                    print_issues(&issues);
                    return Ok(ExitCode::from(1));
                }
            };
            let config = load_config(config.as_deref())?;
            let bundle = config.bundle()?;
            let suite = run_suite(std::slice::from_ref(&loaded), &config.pipeline, &bundle)?;
            let rendered = emit_report(&ReportPayload::Suite(suite), format.into());
            write_output(&rendered, report.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            traces,
            grid,
            config,
            report,
            format,
        } => {
            let loaded = match load_trace_dir(&traces) {
                Ok(traces) => traces,
                Err(issues) => {
                    print_issues(&issues);
                    return Ok(ExitCode::from(1));
                }
            };
            let grid_text = std::fs::read_to_string(&grid)
                .with_context(|| format!("reading grid {}", grid.display()))?;
            let grid: ConfigGrid = serde_json::from_str(&grid_text).context("parsing grid file")?;
            let config = load_config(config.as_deref())?;
            let bundle = config.bundle()?;
            let sweep = ablation_sweep(&loaded, &config.pipeline, &grid, &bundle)?;
            let rendered = emit_report(&ReportPayload::Sweep(sweep), format.into());
            write_output(&rendered, report.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { trace } => match load_trace(&trace) {
            Ok(loaded) => {
                println!(
                    "{} ok: {} frames, {} generation records, {} decisions",
                    trace.display(),
                    loaded.frames.len(),
                    loaded.sgg.len(),
                    loaded.decisions.len()
                );
                Ok(ExitCode::SUCCESS)
            }
            Err(issues) => {
                print_issues(&issues);
                Ok(ExitCode::from(1))
            }
        },
        Command::GenTrace {
            seed,
            frames,
            window,
            out,
        } => {
            let trace = gen_trace(&GenParams {
                seed,
                frames,
                window,
            });
            write_output(&trace.to_jsonl(), out.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
