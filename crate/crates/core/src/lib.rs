//! Few-shot classification on pre-extracted feature vectors: channel-wise
//! transforms, oracle channel weights, episodic evaluation and MMC analytics.

pub mod analysis;
pub mod classify;
pub mod data;
pub mod episodes;
pub mod error;
pub mod io;
pub mod numfmt;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod theory;
pub mod transforms;

pub use data::{ChannelStats, ClassSamples, EmbeddingDataset, FeatureVector, MMCVector};
pub use error::{Error, Result};
pub use report::EvalReport;
pub use transforms::TransformSpec;
