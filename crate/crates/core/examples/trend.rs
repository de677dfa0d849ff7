//! Baseline, masked-pretrained and autoencoder-pretrained fine-tuning on
//! the default synthetic corpus; prints median dev token error per epoch.
//!
//!     cargo run --release --example trend -- [seeds=1,2,3] [finetune epochs=15] [pretrain epochs=10]

use maskrec::synth::{generate_corpus, SynthConfig};
use maskrec::train::{finetune, load_features, pretrain, FinetuneInit, FrontEnd, RunOptions, Stage, TrainConfig};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds: Vec<u64> = std::env::args()
        .nth(1)
        .map(|s| s.split(',').filter_map(|x| x.parse().ok()).collect())
        .unwrap_or_else(|| vec![1, 2, 3]);
    let ft_epochs: usize = arg(2, 15);
    let pt_epochs: usize = arg(3, 10);
    let dir = tempfile::tempdir()?;
    let corpus = generate_corpus(dir.path(), &SynthConfig::default())?;
    let front = FrontEnd { n_mels: 40, normalize: true };
    let load = |p| load_features(p, front, None);
    let (unl, unl_dev, train, dev) = (load(&corpus.unlabeled)?, load(&corpus.unlabeled_dev)?, load(&corpus.train)?, load(&corpus.dev)?);

    let mut curves: Vec<[Vec<f64>; 3]> = Vec::new();
    for &seed in &seeds {
        let pcfg = TrainConfig::from_toml_str(&format!("seed = {seed}\nmax_epochs = {pt_epochs}\npatience = {pt_epochs}\n"), Stage::Pretrain, None)?;
        let masked = pretrain(&unl, &unl_dev, &pcfg, &RunOptions::default())?;
        let ae = pretrain(&unl, &unl_dev, &TrainConfig { m_f: 0, m_t: 0, ..pcfg }, &RunOptions::default())?;
        eprintln!(
            "seed {seed}: masked pretraining dev loss {:.1} -> {:.1}",
            masked.initial_dev_loss, masked.best_dev_loss
        );
        let fcfg = TrainConfig::from_toml_str(&format!("seed = {seed}\nmax_epochs = {ft_epochs}\npatience = {ft_epochs}\n"), Stage::Finetune, None)?;
        let arm = |init| -> maskrec::Result<Vec<f64>> {
            let out = finetune(&train, &dev, &corpus.vocab, init, &fcfg, &RunOptions::default())?;
            Ok(out.reports.iter().filter_map(|r| r.dev_error_rate).collect())
        };
        curves.push([arm(FinetuneInit::Fresh)?, arm(FinetuneInit::Pretrained(masked.model))?, arm(FinetuneInit::Pretrained(ae.model))?]);
    }
    let median = |arm: usize, e: usize| {
        let mut v: Vec<f64> = curves.iter().filter_map(|c| c[arm].get(e).copied()).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    println!("epoch  baseline  masked  autoencoder");
    for e in 0..ft_epochs {
        println!("{:5}  {:8.2}  {:6.2}  {:11.2}", e + 1, median(0, e), median(1, e), median(2, e));
    }
    Ok(())
}
