//! Scores responses of one synthetic question set against the exemplar and
//! the picture, raw and min-max normalized.
//!
//! cargo run --example relevance_scores

use asa::features::{extract_raw, Backends};
use asa::relevance::fit_normalizer;
use asa::synthetic::{generate_synthetic_corpus, SyntheticSpec};

fn main() -> asa::Result<()> {
    let dir = std::env::temp_dir().join(format!("asa-relevance-{}", std::process::id()));
    let spec = SyntheticSpec {
        audio: false,
        ..Default::default()
    };
    let corpus = generate_synthetic_corpus(&dir, &spec)?;
    let m = &corpus.manifest;
    let qs = &m.question_sets[0];
    let b = Backends::rule_doubles(0);
    let raws = m
        .responses
        .iter()
        .filter(|r| r.question_set_id == qs.id)
        .map(|r| extract_raw(&b, qs, r).map(|f| (r.scores.relevance, f)))
        .collect::<asa::Result<Vec<_>>>()?;
    let er = fit_normalizer(&raws.iter().map(|(_, f)| f.er_split.clone()).collect::<Vec<_>>())?;
    let ir = fit_normalizer(&raws.iter().map(|(_, f)| f.ir_split.clone()).collect::<Vec<_>>())?;
    for q in &qs.questions {
        println!("Q: {q}");
    }
    for (score, f) in &raws {
        println!("\n{} relevance={score:?}", f.response_id);
        println!("  exemplar {:?}", er.normalize_slots(&f.er_split)?);
        println!("  image    {:?}", ir.normalize_slots(&f.ir_split)?);
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
