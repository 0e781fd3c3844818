//! Nearest-neighbour few-shot inference over frozen embeddings.
//!
//! Support and query features are centred on a source-language mean,
//! L2-normalised and shift-corrected; queries are classified by cosine
//! distance to class prototypes, optionally rectified with the query set's
//! own pseudo-labels. The crate also provides the EMB1 dataset container,
//! the zero-shot and linear-head baselines, an episodic evaluation harness,
//! and a synthetic Gaussian-mixture generator with a Bayes oracle.
//!
//! Numeric routines are generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below name the `f64` instantiations the harness uses.

pub mod baselines;
pub mod episodic;
pub mod error;
pub mod matrix;
pub mod nnfs;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod store;
pub mod synthetic;
pub mod timing;

pub use baselines::{
    head_loss_and_gradient, head_predict, train_head, zero_shot_predict, HeadConfig, LinearHead,
};
pub use episodic::{
    ci_half_width_95, compare_methods, run_evaluation, sample_episode, score_episode, Episode,
    EpisodeBatch, EpisodeConfig, EpisodeMethod, EpisodeSampler, EvalReport, Method,
};
pub use error::{Error, Result};
pub use matrix::FeatureMatrix;
pub use nnfs::{
    center_and_normalize, class_prototypes, l2_normalize, nearest_centroid_assign, nnfs_infer,
    proto_rect, soft_predictions, transductive_shift, NnfsConfig, PredictionResult, Prototypes,
};
pub use scalar::Scalar;
pub use store::{
    compute_mean_vector, read_emb1, read_emb1_file, write_emb1, write_emb1_file, EmbeddingDataset,
    MeanVector, Split,
};

pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type MeanVector32 = MeanVector<f32>;
pub type MeanVector64 = MeanVector<f64>;
pub type Prototypes32 = Prototypes<f32>;
pub type Prototypes64 = Prototypes<f64>;
pub type PredictionResult32 = PredictionResult<f32>;
pub type PredictionResult64 = PredictionResult<f64>;
pub type LinearHead32 = LinearHead<f32>;
pub type LinearHead64 = LinearHead<f64>;
