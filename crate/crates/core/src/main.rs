use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jointspeech::cli::{self, ExperimentConfig, GradCheckRequest, Preset};
use jointspeech::net::GradCheckOptions;
use jointspeech::Result;

#[derive(Parser)]
#[command(
    name = "jointspeech",
    version,
    about = "Joint audio-visual speech enhancement and CTC phone recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config)?.with_overrides(
            self.seed,
            self.out.as_deref(),
            self.preset.map(Preset::from),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the configured synthetic corpus to disk.
    GenCorpus {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Train with the configured strategy.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Score a checkpoint on a corpus.
    Eval {
        /// Checkpoint stem (without .json/.bin).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Phone folding table, one "src dst" pair per line.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Require folded PER.
        #[arg(long)]
        per39: bool,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients at initialisation.
    GradCheck {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Entries sampled per array; all entries when absent.
        #[arg(long)]
        max_entries: Option<usize>,
        #[arg(long, default_value_t = 0)]
        utterance: usize,
        /// Double this array's analytic gradient before checking.
        #[arg(long)]
        corrupt: Option<String>,
    },
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| jointspeech::Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenCorpus { exp } => {
            let cfg = exp.load()?;
            let dir = exp.out.clone().unwrap_or_else(|| cfg.output_dir.join("corpus"));
            let summary = cli::gen_corpus(&cfg, &dir)?;
            print_json(&summary, None)?;
        }
        Command::Train { exp } => {
            let cfg = exp.load()?;
            let outcome = cli::train(&cfg)?;
            let last = outcome.history.records.last().expect("at least one epoch");
            println!(
                "trained {} epochs ({} updates, {} skipped); final valid PER {:.2}%",
                outcome.history.len(),
                outcome.history.updates,
                outcome.history.skipped,
                last.valid_per
            );
            println!("history: {}", outcome.history_csv.display());
            println!("checkpoint: {}", outcome.checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            corpus,
            mapping,
            per39,
            out,
        } => {
            let report = cli::eval(&checkpoint, &corpus, mapping.as_deref(), per39)?;
            print_json(&report, out.as_deref())?;
        }
        Command::GradCheck {
            exp,
            tolerance,
            max_entries,
            utterance,
            corrupt,
        } => {
            let cfg = exp.load()?;
            let req = GradCheckRequest {
                options: GradCheckOptions {
                    tolerance,
                    max_entries,
                    seed: cfg.seed,
                    ..GradCheckOptions::default()
                },
                utterance,
                corrupt,
            };
            let report = cli::grad_check_cmd(&cfg, &req)?;
            for a in &report.arrays {
                println!(
                    "{:<40} {:>6} entries  max rel {:.3e}  {}",
                    a.name,
                    a.checked,
                    a.max_rel_error,
                    if a.passed { "ok" } else { "FAIL" }
                );
            }
            println!(
                "max relative error {:.3e} (tolerance {:.1e})",
                report.max_rel_error, report.tolerance
            );
            return Ok(report.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e))
        }
    }
}
