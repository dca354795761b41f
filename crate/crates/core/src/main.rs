use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use asa::config::{PipelineConfig, SplitterKind};
use asa::corpus::SplitName;
use asa::pipeline;
use asa::{AsaError, Result};

#[derive(Parser)]
#[command(name = "asa", version, about = "Multimodal automated speaking assessment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; ASA__SECTION__KEY environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and its manifest.
    Generate,
    /// Extract and cache raw features for every response.
    Extract {
        #[arg(long, value_enum)]
        splitter: Option<Splitter>,
        #[arg(long)]
        splitter_endpoint: Option<String>,
    },
    /// Train on the train split, selecting the best dev epoch.
    Train,
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long, value_enum, default_value = "known_test")]
        split: Split,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate every cell of an ablation grid.
    Ablate {
        #[arg(long, default_value = "holistic")]
        grid: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Splitter {
    Llm,
    Fallback,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Split {
    Train,
    Dev,
    KnownTest,
    UnknownTest,
}

impl From<Split> for SplitName {
    fn from(s: Split) -> Self {
        match s {
            Split::Train => SplitName::Train,
            Split::Dev => SplitName::Dev,
            Split::KnownTest => SplitName::KnownTest,
            Split::UnknownTest => SplitName::UnknownTest,
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(m) = &cli.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(o) = &cli.output_dir {
        cfg.output_dir = o.clone();
    }
    if let Command::Extract {
        splitter,
        splitter_endpoint,
    } = &cli.command
    {
        if let Some(s) = splitter {
            cfg.splitter.backend = match s {
                Splitter::Llm => SplitterKind::Llm,
                Splitter::Fallback => SplitterKind::Fallback,
            };
        }
        if let Some(e) = splitter_endpoint {
            cfg.splitter.endpoint = Some(e.clone());
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Generate => {
            let c = pipeline::cmd_generate(&cfg)?;
            println!(
                "wrote {} responses to {}",
                c.manifest.responses.len(),
                c.manifest_path.display()
            );
        }
        Command::Extract { .. } => {
            let r = pipeline::cmd_extract(&cfg)?;
            println!(
                "computed {}, cached {}, failed {}",
                r.computed.len(),
                r.cached.len(),
                r.failures.len()
            );
            if !r.failures.is_empty() {
                for f in &r.failures {
                    eprintln!("{}: {}", f.response_id, f.error);
                }
                return Ok(r.failures.iter().map(|f| f.exit_code).max().unwrap_or(2));
            }
        }
        Command::Train => {
            let s = pipeline::cmd_train(&cfg)?;
            let dev = s
                .best_dev_accuracy
                .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
            println!(
                "{} epochs, best epoch {} (dev accuracy {dev}), checkpoint {}",
                s.epochs_run,
                s.best_epoch,
                s.checkpoint.display()
            );
        }
        Command::Eval { split, checkpoint } => {
            let r = pipeline::cmd_eval(&cfg, checkpoint.as_deref(), (*split).into())?;
            print!("{}", r.to_table());
        }
        Command::Ablate { grid } => {
            let rows = pipeline::cmd_ablate(&cfg, grid)?;
            print!("{}", asa::traineval::ablation_table(&rows));
            if rows.iter().any(|r| r.error.is_some()) {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(AsaError::exit_code(&e) as u8)
        }
    }
}
