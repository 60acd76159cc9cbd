//! Confidence-gated zero-shot classification over precomputed embeddings.

pub mod ablation;
pub mod artifacts;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod llm;
pub mod report;
pub mod retrieval;
pub mod router;
pub mod similarity;
pub mod store;
pub mod tier_l;
pub mod workspace;
pub mod world;

pub use error::{Error, Result};
pub use router::{route_batch, route_one, RoutingConfig, RoutingOutcome, TaskAssets, Tier};
pub use store::{EmbeddingVector, Split};
