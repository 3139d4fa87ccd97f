//! Feature providers, synthetic pair generation, training and evaluation.

pub mod config;
pub mod corpus;
pub mod evaluate;
pub mod pairs;
pub mod provider;
pub mod train;

pub use config::{CorpusSource, TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE, DEFAULT_PCK_ALPHA};
pub use corpus::{procedural_image, resize_bilinear, ImageCorpus};
pub use evaluate::{
    dump_attention, evaluate_keypoints, evaluate_tgd, identity_baseline, mean_grid_distance, predict_all,
    score_predictions, EvalSample, Prediction, TgdReport,
};
pub use pairs::{compose_affine_tps, default_pad, generate_pair, pair_with_transform, synthetic_keypoints, TrainingPair};
pub use provider::{normalize_columns, provider_import, provider_random_projection, FeatureProvider, RandomProjection};
pub use train::{batch_tgd, train, train_with, write_loss_csv, DataSetup, DivergenceGuard, TrainOutcome};
