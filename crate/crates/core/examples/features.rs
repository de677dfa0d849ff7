//! Log mel filterbank energies for one synthetic utterance, before and
//! after per-speaker normalization and frame stacking.

use maskrec::features::{read_manifest, stack_frames};
use maskrec::synth::{generate_corpus, SynthConfig};
use maskrec::train::{extract_features, FrontEnd};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = SynthConfig {
        unlabeled: 4,
        unlabeled_dev: 1,
        labeled: 4,
        labeled_dev: 1,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(dir.path(), &cfg)?;
    let records = read_manifest(&corpus.train)?;
    for normalize in [false, true] {
        let utts = extract_features(&records, FrontEnd { n_mels: 40, normalize })?;
        let f = &utts[0].features;
        let mean: f64 = f.values().iter().sum::<f64>() / f.values().len() as f64;
        println!(
            "normalize={normalize:5}: {} is {} mels x {} frames, hop {} s, mean {mean:.3}",
            utts[0].id(),
            f.dims(),
            f.frames(),
            f.frame_hop()
        );
        let stacked = stack_frames(f, 3)?;
        println!("  stacked by 3: {} x {}, hop {} s", stacked.dims(), stacked.frames(), stacked.frame_hop());
    }
    Ok(())
}
