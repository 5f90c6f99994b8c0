use std::process::ExitCode;

use clap::{Parser, Subcommand};

use phonation_cli::{
    cmd_eval, cmd_gradcam, cmd_preprocess, cmd_synth, cmd_train, EvalArgs, GradcamArgs,
    PreprocessArgs, SynthArgs, TrainArgs,
};

/// Phonation-mode classification from sustained vowels.
#[derive(Parser)]
#[command(name = "phonation", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled dataset.
    Synth(SynthArgs),
    /// Turn a manifest of WAV files into training and test segments.
    Preprocess(PreprocessArgs),
    /// Cross-validate and write per-fold checkpoints and a report.
    Train(TrainArgs),
    /// Score a checkpoint on preprocessed segments.
    Eval(EvalArgs),
    /// Write Grad-CAM heatmaps for one WAV file.
    Gradcam(GradcamArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let rows = cmd_synth(&args)?;
            println!("wrote {} clips to {}", rows.len(), args.out.display());
        }
        Command::Preprocess(args) => {
            let summary = cmd_preprocess(&args)?;
            for s in &summary.skipped {
                eprintln!("warning: skipped {}: {}", s.id, s.reason);
            }
            print!("{}", summary.to_text());
        }
        Command::Train(args) => print!("{}", cmd_train(&args)?.to_text()),
        Command::Eval(args) => print!("{}", cmd_eval(&args)?.to_text()),
        Command::Gradcam(args) => {
            for path in cmd_gradcam(&args)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
