//! CTC fine-tuning from scratch and from a pretrained encoder with the
//! linear input adapter, on the same labeled subset.

use maskrec::synth::{generate_corpus, SynthConfig};
use maskrec::train::{finetune, load_features, pretrain, FinetuneInit, FrontEnd, RunOptions, Stage, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = SynthConfig {
        unlabeled: 80,
        unlabeled_dev: 10,
        labeled: 40,
        labeled_dev: 16,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(dir.path(), &cfg)?;
    let front = FrontEnd { n_mels: 40, normalize: true };
    let load = |p| load_features(p, front, None);
    let (unl, unl_dev, train, dev) = (load(&corpus.unlabeled)?, load(&corpus.unlabeled_dev)?, load(&corpus.train)?, load(&corpus.dev)?);
    let small = "seed = 1\n";
    let pcfg = TrainConfig::from_toml_str(&format!("{small}max_epochs = 3\nbatch_size = 8\n"), Stage::Pretrain, None)?;
    let pre = pretrain(&unl, &unl_dev, &pcfg, &RunOptions::default())?;

    let fcfg = TrainConfig::from_toml_str(&format!("{small}max_epochs = 10\n"), Stage::Finetune, None)?;
    let lin = TrainConfig::from_toml_str(&format!("{small}max_epochs = 10\nlin_adapt = true\nlin_freeze_epochs = 2\n"), Stage::Finetune, None)?;
    for (name, init, c) in [
        ("scratch", FinetuneInit::Fresh, &fcfg),
        ("pretrained + adapter", FinetuneInit::Pretrained(pre.model), &lin),
    ] {
        let out = finetune(&train, &dev, &corpus.vocab, init, c, &RunOptions::default())?;
        let rates: Vec<String> = out
            .reports
            .iter()
            .map(|r| format!("{:.1}{}", r.dev_error_rate.unwrap_or(f64::NAN), if r.frozen { "*" } else { "" }))
            .collect();
        println!("{name:>20}: dev token error per epoch {} (* = recurrent layers frozen)", rates.join(" "));
    }
    Ok(())
}
