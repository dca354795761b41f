//! Annotates a sentence and encodes it as multi-hot syntax vectors.
//!
//! cargo run --example syntax_features -- "The red cup is on the table."

use asa::syntax::{syntax_features, RuleAnnotator, SyntacticAnnotationBackend, SyntaxSchema};

fn main() -> asa::Result<()> {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "The red cup is on the wooden table.".into());
    let ann = RuleAnnotator.annotate(&text)?;
    for t in &ann {
        let feats: Vec<String> = t.feats.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "{:<8} {:<6} {:<2} {:<8} {}",
            t.text,
            t.pos,
            t.head,
            t.dep,
            feats.join("|")
        );
    }
    let schema = SyntaxSchema::freeze(&ann);
    let seq = syntax_features(&RuleAnnotator, &schema, &text)?;
    println!("\nencoded: {:?}", seq.vectors.dim());
    Ok(())
}
