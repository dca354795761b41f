//! The whole pipeline on a fresh synthetic corpus: generate, extract, train
//! a small model, then evaluate every split.
//!
//! cargo run --release --example train_eval -- [OUT_DIR] [EPOCHS]

use std::path::PathBuf;

use asa::config::PipelineConfig;
use asa::corpus::SplitName;
use asa::model::ModelConfig;
use asa::pipeline;

fn main() -> asa::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "asa-demo".into()));
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);

    let mut cfg = PipelineConfig::default();
    cfg.generate.dir = out.join("corpus");
    cfg.output_dir = out.join("run");
    cfg.model = ModelConfig::tiny();
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 4;
    cfg.train.learning_rate = 1e-3;

    let corpus = pipeline::cmd_generate(&cfg)?;
    println!("{} responses", corpus.manifest.responses.len());
    let ex = pipeline::cmd_extract(&cfg)?;
    println!("extracted {} ({} cached)", ex.computed.len(), ex.cached.len());
    let t = pipeline::cmd_train(&cfg)?;
    println!(
        "trained {} epochs on {} responses, best epoch {}",
        t.epochs_run, t.n_train, t.best_epoch
    );
    for split in [
        SplitName::Train,
        SplitName::Dev,
        SplitName::KnownTest,
        SplitName::UnknownTest,
    ] {
        println!("\n{}", pipeline::cmd_eval(&cfg, None, split)?.to_table());
    }
    Ok(())
}
