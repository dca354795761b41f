//! Splits a consolidated answer into per-question segments with the lexical
//! fallback and shows the prompt an LLM splitter would receive.
//!
//! cargo run --example response_splitting

use asa::splitting::{build_prompt, fallback_split};

fn main() {
    let questions = vec![
        "What is on the table?".to_string(),
        "What color is the cup?".to_string(),
        "Where do you usually drink tea?".to_string(),
    ];
    let answer = "There is a cup and a book on the table. The cup is red. \
                  I usually drink tea in my kitchen in the morning.";
    println!("{}\n", build_prompt(&questions, answer));
    let split = fallback_split(&questions, answer);
    for (q, (seg, grounded)) in questions.iter().zip(split.segments.iter().zip(&split.grounded)) {
        println!("{q}\n  -> {seg:?} (grounded: {grounded})");
    }
}
