//! Extracts features for one synthetic response, assembles them and runs
//! the untrained scoring model forward.
//!
//! cargo run --release --example model_forward -- [tiny]

use asa::features::{extract_raw, AblationToggles, Backends, FeatureAssembler};
use asa::model::{Model, ModelConfig};
use asa::relevance::NormalizerScope;
use asa::synthetic::{generate_synthetic_corpus, SyntheticSpec};

fn main() -> asa::Result<()> {
    let tiny = std::env::args().nth(1).as_deref() == Some("tiny");
    let dir = std::env::temp_dir().join(format!("asa-forward-{}", std::process::id()));
    let corpus = generate_synthetic_corpus(&dir, &SyntheticSpec::default())?;
    let m = &corpus.manifest;
    let b = Backends::rule_doubles(0);
    let raws = m
        .responses
        .iter()
        .map(|r| extract_raw(&b, m.question_set(&r.question_set_id).unwrap(), r))
        .collect::<asa::Result<Vec<_>>>()?;
    let asm = FeatureAssembler::fit(&raws, AblationToggles::default(), NormalizerScope::PerQuestion)?;
    let x = asm.assemble(&raws[0])?;
    println!("question-response {:?}", x.qr.data.dim());
    println!("syntax            {:?}", x.syntax.data.dim());
    println!("delivery          {:?}", x.delivery.data.dim());
    println!("er {} ir {} grammar {}", x.er.len(), x.ir.len(), x.grammar.len());

    let config = if tiny {
        ModelConfig::tiny()
    } else {
        ModelConfig::default()
    };
    let model = Model::new(config)?;
    let n: usize = (0..model.params.len()).map(|i| model.params.get(i).len()).sum();
    println!("\n{} parameter tensors, {n} scalars", model.params.len());
    let p = model.predict(&x)?;
    println!("logits {:?}\nscore {}", p.outputs, p.score);
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
