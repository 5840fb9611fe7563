//! Conditional VAE-GAN over voxel grids: encoder, conditioned generator with
//! skip connections, gradient-penalty critic and their losses.

mod config;
mod infer;
mod loss;
mod model;
mod weights;

pub use config::{LatentKind, NetworkConfig};
pub use infer::{discriminate, encode, generate, predict, predict_batch, reparameterize, EncoderOutput, LatentCode, Sampling};
pub use loss::{
    critic_loss, generator_loss, interpolate, prior_loss, prior_loss_value, reconstruction_loss, reconstruction_loss_value,
    CriticLoss, PROB_CLAMP,
};
pub use model::{condition_batch, grid_batch, Bound, Encoded, LOG_VAR_MAX, LOG_VAR_MIN};
pub use weights::{ModelWeights, ParamGroup, CHECKPOINT_VERSION};

#[cfg(test)]
mod tests;
