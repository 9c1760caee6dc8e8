//! Feed-forward encoder/decoder networks with analytic reverse-mode
//! gradients, the two autoencoder losses, and Adam.

mod adam;
mod autoencoder;
mod checkpoint;
mod loss;
mod mlp;

pub use adam::AdamState;
pub use autoencoder::{Autoencoder, AutoencoderGrads, EncoderPass, Mode};
pub use checkpoint::{autoencoder_to_string, load_autoencoder, parse_autoencoder, save_autoencoder, CHECKPOINT_MAGIC};
pub use loss::{
    binary_ce, binary_ce_grad, categorical_ce, categorical_ce_grad, per_sample_binary_ce, per_sample_categorical_ce,
    PROB_CLAMP,
};
pub use mlp::{flatten_grads, glorot_init, Activation, ForwardCache, Layer, LayerGrad, LayerSpec, Mlp, MlpGrads, LEAKY_SLOPE};
