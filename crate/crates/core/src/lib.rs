//! Cross-lingual retrieval augmentation for low-resource text classification.
//!
//! A labeled multilingual [`Pool`] of precomputed embeddings is indexed with
//! an HNSW graph ([`AnnIndex`]). A small labeled target set acts as the query
//! batch: the [`retriever`] takes the per-query top-k union over the pool,
//! removes exact textual duplicates and tops up until exactly `R` unique
//! instances remain (optionally diversified with MMR). The [`classifier`]
//! trains a logistic probe on the combined set, and [`eval`] runs the
//! seeded low-resource protocol end to end.

pub mod ann;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod metric;
pub mod par;
pub mod pool;
pub mod retriever;
pub mod synthetic;

pub use ann::{brute_force_search, AnnIndex, HnswParams, Neighbor};
pub use classifier::{LinearModel, TrainConfig};
pub use error::{Error, Result};
pub use metric::{cosine, euclidean};
pub use par::Parallelism;
pub use pool::{filter_pool, load_pool, pool_stats, write_pool, Instance, Pool, PoolView, VectorBlock};
pub use retriever::{mmr_select, retrieve, topk_union, MmrConfig, RetrievalConfig, RetrievedSet};
