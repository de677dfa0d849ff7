//! Greedy, beam and exhaustive CTC decoding of the same posteriors.

use maskrec::decode::{beam_decode, exhaustive_decode, greedy_decode};
use maskrec::nn::Tensor;
use rand::{Rng, SeedableRng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let logits = Tensor::from_fn(6, 3, |_, _| rng.gen_range(-1.5..1.5));
    println!("greedy: {:?}", greedy_decode(&logits)?);
    for beam in [1, 2, 4, 8] {
        let h = beam_decode(&logits, beam)?;
        println!("beam {beam}: {:?} log p = {:.6}", h.tokens, h.log_prob);
    }
    if let Some(h) = exhaustive_decode(&logits, 1e6)? {
        println!("exact:  {:?} log p = {:.6}", h.tokens, h.log_prob);
    }
    Ok(())
}
