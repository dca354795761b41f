//! Corrects a transcript with the rule-based GEC double, aligns the edits and
//! prints them as an M2 block plus the nonzero error frequencies.
//!
//! cargo run --example grammar_m2 -- "she go to the school yesterday"

use asa::grammar::{analyze, freeze_taxonomy, grammar_features, RuleGec, GRAMMAR_DIM};
use asa::syntax::RuleAnnotator;

fn main() -> asa::Result<()> {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "The boy has two cat and he goed to a school yesterday .".into());
    let a = analyze(&RuleGec, &RuleAnnotator, &text)?;
    println!("raw:       {}", a.raw_text);
    println!("corrected: {}\n", a.corrected_text);
    print!("{}", a.to_m2());

    let labels = a.labels();
    let taxonomy = freeze_taxonomy(labels.iter().map(String::as_str), GRAMMAR_DIM)?;
    let v = grammar_features(&taxonomy, &labels, &a.raw_text)?;
    println!("\n{} words", v.word_count);
    for (label, f) in taxonomy.labels.iter().zip(&v.freqs) {
        if *f > 0.0 {
            println!("  {label:<16} {f:.3}");
        }
    }
    Ok(())
}
