use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use copg_cli::ablate::{ablate, AblateArgs};
use copg_cli::evaluate::{evaluate, format_reports, EvaluateArgs};
use copg_cli::propose::{propose, ProposeArgs};
use copg_cli::report::{report, ReportArgs};
use copg_cli::synth::{synth, SynthArgs};

/// Corner-case proposals from lidar point clouds.
#[derive(Parser)]
#[command(name = "copg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the proposal pipeline over a corpus.
    Propose(ProposeArgs),
    /// Score proposals against ground truth.
    Evaluate(EvaluateArgs),
    /// Sweep one pipeline parameter.
    Ablate(AblateArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
    /// Render proposal overlays and a metrics CSV.
    Report(ReportArgs),
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Propose(args) => {
            let manifest = propose(&args)?;
            let errors = manifest.num_errors();
            for s in manifest.scenes.iter().filter(|s| s.error.is_some()) {
                eprintln!("scene {}: {}", s.scene_id, s.error.as_deref().unwrap_or_default());
            }
            println!(
                "{} scenes, {} failed; manifest in {}",
                manifest.scenes.len(),
                errors,
                args.out.display()
            );
            if let Some(t) = &manifest.throughput {
                println!(
                    "core pipeline {:.1} ms mean, {:.1} ms max per scene (target {} ms)",
                    t.mean_core_ms, t.max_core_ms, t.target_ms
                );
            }
            Ok(if errors == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Evaluate(args) => {
            print!("{}", format_reports(&evaluate(&args)?));
            Ok(ExitCode::SUCCESS)
        }
        Command::Ablate(args) => {
            print!("{}", ablate(&args)?.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth(args) => {
            let scenes = synth(&args)?;
            println!("wrote {} scenes to {}", scenes.len(), args.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report(args) => {
            let n = report(&args)?;
            println!("rendered {n} overlays to {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
