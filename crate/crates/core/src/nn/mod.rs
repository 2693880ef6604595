//! Small dense networks in double precision with exact reverse-mode
//! gradients, an Adam optimizer, categorical head helpers and checkpoints.

mod adam;
mod categorical;
mod checkpoint;
mod mlp;

pub use adam::Adam;
pub use categorical::{argmax, categorical_sample, entropy, entropy_grad, log_prob_grad, log_softmax, softmax};
pub use checkpoint::{hex, Checkpoint, CheckpointRole, CHECKPOINT_VERSION};
pub use mlp::{Activation, ForwardCache, Mlp};

/// Hidden layer widths used by every policy and value network.
pub const HIDDEN: [usize; 2] = [64, 64];

/// `[input, 64, 64, output]`.
pub fn layer_sizes(input: usize, output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(HIDDEN);
    sizes.push(output);
    sizes
}
