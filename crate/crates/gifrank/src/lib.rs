//! Learning-to-rank toolkit that recommends reply GIF categories for
//! tweets: a trained neural pair scorer produces candidate scores and
//! embeddings, a feature bank adds engineered text-similarity features,
//! and a gradient-boosted pairwise reranker orders the final top-6.
//!
//! Numeric code is generic over the scalar type via [`num::Scalar`]
//! (`f32` or `f64`); the crate root exports `f64`-concrete aliases used
//! by the CLI pipeline.

pub mod binio;
pub mod boostrank;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod featbank;
pub mod metrics;
pub mod num;
pub mod pipeline;
pub mod textprep;
pub mod util;

pub use error::{Error, Result};
pub use num::{Matrix, Scalar};

/// Default scalar type for the CLI pipeline.
pub type F = f64;
