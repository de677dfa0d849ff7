//! Training objectives: masked reconstruction and CTC.

mod ctc;
mod masked;
mod vocab;

pub use ctc::{ctc_brute_force, ctc_log_prob, ctc_loss, ctc_required_frames, CtcOutput, BRUTE_FORCE_MAX_PATHS};
pub use masked::{mask_tensor, masked_loss_and_grad, masked_reconstruction_eval, masked_reconstruction_loss, LossRegion, LossWeights, ReconLoss};
pub use vocab::{LabelSequence, Vocabulary};
