//! Content-based image and video retrieval over feature embeddings.
//!
//! Images are single-frame records; videos are frame sequences collapsed to
//! one vector by [`temporal::aggregate`]. Indexed vectors live in a flat
//! [`store::Repository`] and are ranked by euclidean distance, cosine
//! similarity, or proximal affinity re-ranking ([`ranking::par_rerank`]).

mod codec;
pub mod error;
pub mod evalharness;
pub mod ranking;
pub mod reduce;
pub mod server;
pub mod store;
pub mod synth;
pub mod temporal;
pub mod vectors;

pub mod cli;

pub use error::{Error, Result};
pub use ranking::{par_rerank, rank, rank_cosine, rank_euclidean, Method, RankedEntry, RankedResult};
pub use reduce::{pca_fit, pca_transform, PcaModel};
pub use store::{
    build_index, load_index, read_embeddings, save_index, write_embeddings, MediaKind, MediaRecord,
    Repository,
};
pub use temporal::{
    aggregate, lstm_forward, sample_frame_indices, segment_chunks, AggregationKind,
    AggregationStrategy, FrameFeatureSequence, LstmWeights,
};
pub use vectors::{cosine_similarity, euclidean_distance, l2_norm, FeatureVector};
