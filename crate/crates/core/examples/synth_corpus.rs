//! Generate the synthetic token corpus and print its splits.
//!
//!     cargo run --release --example synth_corpus -- /tmp/corpus

use maskrec::features::read_manifest;
use maskrec::synth::{generate_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth-corpus".into());
    let cfg = SynthConfig {
        unlabeled: 40,
        unlabeled_dev: 8,
        labeled: 12,
        labeled_dev: 8,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(out.as_ref(), &cfg)?;
    println!("vocabulary: {}", corpus.vocab.tokens().join(" "));
    for (name, path) in [
        ("unlabeled", &corpus.unlabeled),
        ("unlabeled dev", &corpus.unlabeled_dev),
        ("train", &corpus.train),
        ("dev", &corpus.dev),
    ] {
        let records = read_manifest(path)?;
        let mut speakers: Vec<&str> = records.iter().map(|r| r.speaker_id.as_str()).collect();
        speakers.sort();
        speakers.dedup();
        println!("{name:>13}: {:3} utterances, {:2} speakers, first: {:?}", records.len(), speakers.len(), records[0].transcript);
    }
    Ok(())
}
