//! Sample time and frequency masks and show one as text.

use maskrec::augment::{sample_mask, MaskSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MaskSpec {
        m_f: 1,
        n_f: 8,
        m_t: 2,
        n_t: 16,
        seed: 3,
    };
    let (dims, frames) = (40, 120);
    let mask = sample_mask(dims, frames, &spec, &mut spec.stream("utt-0", 0))?;
    for d in (0..dims).rev().step_by(2) {
        let row: String = (0..frames).step_by(2).map(|t| if mask.is_masked(d, t) { '#' } else { '.' }).collect();
        println!("{d:2} {row}");
    }
    let fractions: Vec<f64> = (0..1000)
        .map(|i| sample_mask(dims, frames, &spec, &mut spec.stream("utt-0", i)).map(|m| m.masked_cells() as f64 / (dims * frames) as f64))
        .collect::<maskrec::Result<_>>()?;
    println!("mean masked fraction over 1000 epochs: {:.3}", fractions.iter().sum::<f64>() / 1000.0);
    Ok(())
}
