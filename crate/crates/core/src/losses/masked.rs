//! Masked reconstruction: `L = ‖(1−M) ⊙ [X − g(f(M⊙X))]‖²_F`.
//!
//! Tensors here are `T × D` (frame-major), matching the model input. The mask
//! is given in the same layout as values in {0, 1}, 1 meaning kept.

use serde::{Deserialize, Serialize};

use crate::augment::Mask;
use crate::error::{Error, Result};
use crate::models::{Mode, PretrainModel};
use crate::nn::Tensor;

/// Which cells the reconstruction error is taken over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossRegion {
    /// `(1−M)`: only masked cells.
    #[default]
    MaskedCells,
    /// Every cell, ignoring `M` in the loss (plain autoencoding).
    AllCells,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossWeights {
    pub region: LossRegion,
    /// Divide the summed error by the number of counted cells.
    pub per_cell: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconLoss {
    pub loss: f64,
    /// Cells that contributed to the loss.
    pub counted_cells: usize,
}

/// Loss and `dL/drecon` for given input, reconstruction and keep-mask.
pub fn masked_loss_and_grad(x: &Tensor, recon: &Tensor, keep: &Tensor, weights: LossWeights) -> Result<(ReconLoss, Tensor)> {
    if x.shape() != recon.shape() {
        return Err(Error::shape("reconstruction", x.shape(), recon.shape()));
    }
    if x.shape() != keep.shape() {
        return Err(Error::shape("mask", x.shape(), keep.shape()));
    }
    let mut grad = Tensor::zeros(x.shape());
    let mut loss = 0.0;
    let mut counted = 0;
    for (i, ((&xv, &rv), &m)) in x.data().iter().zip(recon.data()).zip(keep.data()).enumerate() {
        let w = match weights.region {
            LossRegion::MaskedCells => 1.0 - m,
            LossRegion::AllCells => 1.0,
        };
        if w == 0.0 {
            continue;
        }
        counted += 1;
        let diff = rv - xv;
        loss += w * diff * diff;
        grad.data_mut()[i] = 2.0 * w * diff;
    }
    if weights.per_cell && counted > 0 {
        let s = 1.0 / counted as f64;
        loss *= s;
        grad.data_mut().iter_mut().for_each(|g| *g *= s);
    }
    Ok((
        ReconLoss {
            loss,
            counted_cells: counted,
        },
        grad,
    ))
}

/// Runs `g(f(M⊙X))`, returns the loss and accumulates parameter gradients
/// into `model`. `x` is `T × D`; `mask` is `D × T` like the spectrogram it
/// was sampled for.
pub fn masked_reconstruction_loss(
    model: &mut PretrainModel,
    x: &Tensor,
    mask: &Mask,
    weights: LossWeights,
    mode: &mut Mode<'_>,
) -> Result<ReconLoss> {
    let keep = mask_tensor(mask, x)?;
    let mut input = x.clone();
    input.data_mut().iter_mut().zip(keep.data()).for_each(|(v, m)| *v *= m);
    let (recon, cache) = model.forward(&input, mode)?;
    let (loss, grad) = masked_loss_and_grad(x, &recon, &keep, weights)?;
    if loss.counted_cells > 0 {
        model.backward(&cache, &grad)?;
    }
    Ok(loss)
}

/// Forward only.
pub fn masked_reconstruction_eval(model: &PretrainModel, x: &Tensor, mask: &Mask, weights: LossWeights) -> Result<ReconLoss> {
    let keep = mask_tensor(mask, x)?;
    let mut input = x.clone();
    input.data_mut().iter_mut().zip(keep.data()).for_each(|(v, m)| *v *= m);
    let (recon, _) = model.forward(&input, &mut Mode::Eval)?;
    Ok(masked_loss_and_grad(x, &recon, &keep, weights)?.0)
}

/// Transpose a `D × T` mask into a `T × D` tensor of keep values.
pub fn mask_tensor(mask: &Mask, x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 2 || [x.cols(), x.rows()] != mask.shape() {
        return Err(Error::shape("mask", &[x.rows(), x.cols()], &[mask.frames(), mask.dims()]));
    }
    Ok(Tensor::from_fn(mask.frames(), mask.dims(), |t, d| mask.get(d, t)))
}
