//! Masked reconstruction loss and CTC loss on small random inputs,
//! checked against direct enumeration.

use maskrec::augment::{sample_mask, MaskSpec};
use maskrec::losses::{ctc_brute_force, ctc_loss, mask_tensor, masked_loss_and_grad, LabelSequence, LossWeights};
use maskrec::nn::Tensor;
use rand::{Rng, SeedableRng};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let (t, d) = (6, 5);
    let x = Tensor::from_fn(t, d, |_, _| rng.gen_range(-1.0..1.0));
    let recon = Tensor::from_fn(t, d, |_, _| rng.gen_range(-1.0..1.0));
    let spec = MaskSpec {
        m_f: 1,
        n_f: 2,
        m_t: 1,
        n_t: 3,
        seed: 0,
    };
    let mask = sample_mask(d, t, &spec, &mut spec.stream("x", 0))?;
    let keep = mask_tensor(&mask, &x)?;
    let (out, _) = masked_loss_and_grad(&x, &recon, &keep, LossWeights::default())?;
    println!("{} of {} cells masked, masked L2 loss {:.6}", mask.masked_cells(), t * d, out.loss);

    let logits = Tensor::from_fn(5, 3, |_, _| rng.gen_range(-2.0..2.0));
    let labels = LabelSequence::new("y", vec![0, 1], 2)?;
    let fast = ctc_loss(&logits, &labels)?.loss;
    let slow = ctc_brute_force(&logits, &labels)?;
    println!("ctc loss {fast:.12} (forward-backward) vs {slow:.12} (all alignments)");
    Ok(())
}
