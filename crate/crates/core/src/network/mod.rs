//! The local transformation encoder and the attentive global
//! transformation estimator: everything between the feature maps and `θ`.

mod attention;
mod config;
mod encoder;
mod layers;
mod model;

pub use attention::{fixed_embedding, theta_from_raw, AttentionHead, HeadCache};
pub use config::{EmbeddingKind, ModelConfig, CORRELATION_EPS, DEFAULT_INIT_SCALE, EMBEDDING_DIM, ENCODER_KERNEL};
pub use encoder::{encode_local_transforms, Encoder, EncoderCache};
pub use layers::{BlockCache, Linear, PointwiseBlock};
pub use model::{AttentionState, ForwardPass, Model, CONFIG_FILE};
pub use crate::tensor::Mode;
