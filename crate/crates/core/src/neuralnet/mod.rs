//! Denoising autoencoder, hypergraph convolutional autoencoder, losses and
//! joint training, all with hand-written reverse-mode gradients.

mod gradcheck;
mod model;
mod ops;
mod params;
mod train;

pub use gradcheck::{compare_gradients, gradient_check, GradCheckReport, DEFAULT_COORDS};
pub use model::{dae_forward, encode, hgcn_forward, loss, loss_and_gradient, Batch, LossParts};
pub use ops::{
    add_noise, default_pos_weight, edge_to_node_aggregate, gaussian_noise, gram, logit_clamp, mse_loss,
    node_to_edge_aggregate, sigmoid, similarity_decode, softplus, weighted_bce_from_logits, weighted_bce_loss, BCE_CLAMP,
};
pub use params::{Activation, Architecture, DenseLayer, GraphLayer, ModelParams};
pub use train::{
    train_from, train_joint, write_trace, write_trace_file, Adam, EmbeddingBundle, LossRecord, TrainConfig,
    TrainOutcome,
};
