//! Generate a synthetic demo corpus: `cargo run --example make_demo_corpus -- <seed> <path>`

use augaudit_core::synth::{generate, SynthConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let path = args.next().unwrap_or_else(|| "demo_corpus.jsonl".to_string());
    let corpus = generate(&SynthConfig::default(), seed);
    std::fs::write(&path, corpus.export_bytes()).expect("write corpus");
    eprintln!("wrote {} cases to {path}", corpus.len());
}
