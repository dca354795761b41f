//! Generates the seeded synthetic corpus and prints a few responses.
//!
//! cargo run --example synthetic_corpus -- OUT_DIR [SEED]

use std::path::PathBuf;

use asa::synthetic::{generate_synthetic_corpus, SyntheticSpec};

fn main() -> asa::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let corpus = generate_synthetic_corpus(
        &dir,
        &SyntheticSpec {
            seed,
            ..Default::default()
        },
    )?;
    println!("wrote {}", corpus.manifest_path.display());
    for r in corpus.manifest.responses.iter().take(5) {
        let s = &r.scores;
        println!(
            "{} holistic={:?} relevance={:?} language_use={:?}\n  {}",
            r.id, s.holistic, s.relevance, s.language_use, r.transcript
        );
    }
    Ok(())
}
