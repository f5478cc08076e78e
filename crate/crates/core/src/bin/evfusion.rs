//! Command-line front end: `map`, `synth` and `eval`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use evfusion::pipeline::{
    parse_synth_params, run_eval, run_pipeline, run_synth, set_synth_param, split_assignment, PipelineConfig,
};
use evfusion::synth::SynthParams;
use evfusion::Error;

#[derive(Parser)]
#[command(name = "evfusion", version, about = "Dense mapping from events and frames")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct one reference view and write clouds, images and reports.
    Map(RunArgs),
    /// Write a synthetic textured-plane dataset.
    Synth(RunArgs),
    /// Per-window planar errors for every configured kernel.
    Eval(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one config key, e.g. `--set fill.kernel=gauss`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn pipeline_config(args: &RunArgs) -> evfusion::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for s in &args.set {
        let (k, v) = split_assignment(s)?;
        cfg.set(k, v)?;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn synth_params(args: &RunArgs) -> evfusion::Result<SynthParams> {
    let mut params = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            parse_synth_params(&text, &path.display().to_string())?
        }
        None => SynthParams::default(),
    };
    for s in &args.set {
        let (k, v) = split_assignment(s)?;
        set_synth_param(&mut params, k, v)?;
    }
    Ok(params)
}

fn run(cli: &Cli) -> evfusion::Result<()> {
    match &cli.command {
        Command::Map(args) => run_pipeline(&pipeline_config(args)?).map(|_| ()),
        Command::Eval(args) => run_eval(&pipeline_config(args)?).map(|_| ()),
        Command::Synth(args) => {
            let out = args
                .out
                .clone()
                .ok_or_else(|| Error::Config("synth needs --out".into()))?;
            run_synth(&synth_params(args)?, &out).map(|_| ())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::EmptyEventWindow { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
