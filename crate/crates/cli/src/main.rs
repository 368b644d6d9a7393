//! `storyseq` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime or validation failure, 2 on usage errors.

mod args;
mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::Parser;
use serde_json::json;

use args::{Cli, Command, ReplayArgs};
use commands::Run;
use manifest::{sha256_file, FileRecord, RunManifest};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Clap(clap::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<storyseq::Error> for Failure {
    fn from(e: storyseq::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    match execute(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Clap(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            ExitCode::from(code)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(argv: Vec<String>) -> Result<(), Failure> {
    let (argv, config) = args::expand_config(argv)?;
    let cli = Cli::try_parse_from(&argv).map_err(Failure::Clap)?;
    match cli.command {
        Command::Replay(r) => replay(&r),
        command => {
            let config = config.map(|p| FileRecord::of("config", &p)).transpose()?;
            run_and_record(&command, config).map(|_| ())
        }
    }
}

fn run_and_record(command: &Command, config: Option<FileRecord>) -> Result<Run, Failure> {
    let start = Instant::now();
    let run = match command {
        Command::Generate(a) => commands::generate(a)?,
        Command::Train(a) => commands::train(a)?,
        Command::Sort(a) => commands::sort(a)?,
        Command::Eval(a) => commands::eval(a)?,
        Command::Replay(_) => return Err(Failure::Usage("a manifest cannot replay another replay".into())),
    };
    if let Some(out) = &run.out {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.name().to_string(),
            args: run.args.clone(),
            config,
            seeds: run.seeds.clone(),
            inputs: run.inputs.clone(),
            outputs: run.outputs.clone(),
            metrics: run.metrics.clone(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        manifest.save(out)?;
    }
    Ok(run)
}

fn replay(r: &ReplayArgs) -> Result<(), Failure> {
    let recorded = RunManifest::load(&r.manifest)?;
    for input in &recorded.inputs {
        let now = sha256_file(&input.path)?;
        if now != input.sha256 {
            return Err(anyhow!(
                "{} input {} changed since the recorded run",
                input.role,
                input.path.display()
            )
            .into());
        }
    }
    let mut args = recorded.args.clone();
    if let Some(out) = &r.out {
        let at = args
            .iter()
            .position(|a| a == "--out")
            .ok_or_else(|| Failure::Usage(format!("{} run has no --out to redirect", recorded.command)))?;
        args[at + 1] = out.display().to_string();
    }
    let argv: Vec<String> = std::iter::once("storyseq".to_string()).chain(args).collect();
    let cli = Cli::try_parse_from(&argv)
        .with_context(|| format!("manifest {} holds unusable arguments", r.manifest.display()))?;
    let run = run_and_record(&cli.command, None)?;
    if run.outputs.len() != recorded.outputs.len() {
        return Err(anyhow!(
            "replay produced {} outputs, manifest lists {}",
            run.outputs.len(),
            recorded.outputs.len()
        )
        .into());
    }
    let checks: Vec<_> = run
        .outputs
        .iter()
        .zip(&recorded.outputs)
        .map(|(now, then)| (now.path.clone(), now.sha256 == then.sha256))
        .collect();
    let report: Vec<_> = checks
        .iter()
        .map(|(p, ok)| json!({ "path": p, "matches": ok }))
        .collect();
    println!("{}", json!({ "replayed": recorded.command, "outputs": report }));
    let differing: Vec<PathBuf> = checks.into_iter().filter(|(_, ok)| !ok).map(|(p, _)| p).collect();
    if differing.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("replayed outputs differ from the manifest: {differing:?}").into())
    }
}
