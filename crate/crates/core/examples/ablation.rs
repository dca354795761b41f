//! Runs one ablation grid with a small model and prints the table.
//!
//! cargo run --release --example ablation -- [holistic|grammar|relevance]

use asa::config::PipelineConfig;
use asa::model::ModelConfig;
use asa::pipeline;

fn main() -> asa::Result<()> {
    let grid = std::env::args().nth(1).unwrap_or_else(|| "holistic".into());
    let out = std::env::temp_dir().join(format!("asa-ablation-{}", std::process::id()));
    let mut cfg = PipelineConfig::default();
    cfg.generate.dir = out.join("corpus");
    cfg.output_dir = out.join("run");
    cfg.model = ModelConfig::tiny();
    cfg.train.epochs = 10;
    cfg.train.batch_size = 4;
    cfg.train.learning_rate = 1e-3;

    pipeline::cmd_generate(&cfg)?;
    pipeline::cmd_extract(&cfg)?;
    let rows = pipeline::cmd_ablate(&cfg, &grid)?;
    for r in &rows {
        println!("{:<40} changes {:?}", r.cell.name, r.cell.changes());
    }
    println!("\n{}", asa::traineval::ablation_table(&rows));
    let _ = std::fs::remove_dir_all(&out);
    Ok(())
}
