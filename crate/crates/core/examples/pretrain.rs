//! Masked reconstruction pretraining on a small synthetic corpus.

use maskrec::synth::{generate_corpus, SynthConfig};
use maskrec::train::{load_features, pretrain, FrontEnd, RunOptions, Stage, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = SynthConfig {
        unlabeled: 60,
        unlabeled_dev: 10,
        labeled: 4,
        labeled_dev: 4,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(dir.path(), &cfg)?;
    let front = FrontEnd { n_mels: 40, normalize: true };
    let train = load_features(&corpus.unlabeled, front, None)?;
    let dev = load_features(&corpus.unlabeled_dev, front, None)?;
    let config = TrainConfig::from_toml_str("seed = 1\nmax_epochs = 5\nbatch_size = 4\nhidden = 32\nfeature_dim = 32\n", Stage::Pretrain, None)?;
    let out = pretrain(&train, &dev, &config, &RunOptions::default())?;
    println!("initial dev loss {:.2}", out.initial_dev_loss);
    for r in &out.reports {
        println!("epoch {} items {} train {:.2} dev {:.2}", r.epoch, r.items, r.train_loss, r.dev_loss);
    }
    Ok(())
}
