use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use brainpinn::cli::{self, Preset, PresetOptions};

#[derive(Parser)]
#[command(
    name = "brainpinn",
    version,
    about = "Sparse, modular physics-informed networks"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set lambda_phase2=0.0`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Run directory (defaults to the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a figure preset: fig2, fig4 or fig5.
    Preset {
        name: Preset,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        /// fig5: module template JSON instead of deriving one.
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Render a snapshot as Graphviz DOT.
    ExportDot {
        snapshot: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Train { config, set, out } => {
            cli::cmd_train(&config, &set, out.as_deref()).map(|run| {
                let f = &run.record.final_report;
                println!(
                    "{}: test mse {:.4e}, euclidean {:.4e}, {} active hidden units",
                    run.dir.display(),
                    f.error.mse,
                    f.error.euclidean,
                    f.active_hidden_units
                );
            })
        }
        Command::Preset {
            name,
            out,
            epochs,
            seeds,
            template,
        } => cli::cmd_preset(
            name,
            &out,
            &PresetOptions {
                epochs,
                seeds,
                template,
            },
        ),
        Command::ExportDot { snapshot, output } => {
            cli::cmd_export_dot(&snapshot, output.as_deref()).map(|dot| {
                if output.is_none() {
                    print!("{dot}");
                }
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
