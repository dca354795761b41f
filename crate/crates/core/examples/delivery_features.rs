//! Synthesizes two voiced words separated by a pause and prints the
//! per-word delivery vectors.
//!
//! cargo run --example delivery_features -- [PITCH_HZ] [GAP_S]

use asa::corpus::WordTimestamp;
use asa::delivery::{delivery_features, synth, Audio};

fn main() -> asa::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<f64>().ok());
    let hz = args.next().flatten().unwrap_or(200.0);
    let gap = args.next().flatten().unwrap_or(0.8);
    let sr = 16_000;
    let mut samples = synth::tone(hz, 0.5, 0.5, sr);
    samples.extend(synth::silence(gap, sr));
    samples.extend(synth::tone(hz * 1.2, 0.5, 0.3, sr));
    let audio = Audio::new(samples, sr);
    let words = vec![
        WordTimestamp("hello".into(), 0.0, 0.5),
        WordTimestamp("there".into(), 0.5 + gap, 1.0 + gap),
    ];
    let f = delivery_features(&audio, &words)?;
    let names = [
        "pitch mean",
        "pitch std",
        "pitch slope",
        "intensity",
        "intensity std",
        "duration",
        "pause",
        "long pause",
        "speech rate",
        "artic. rate",
        "voiced",
        "energy peak",
        "position",
        "silence",
    ];
    for (w, row) in words.iter().zip(f.vectors.rows()) {
        println!("{}", w.token());
        for (n, v) in names.iter().zip(row) {
            println!("  {n:<14} {v:>9.3}");
        }
    }
    Ok(())
}
