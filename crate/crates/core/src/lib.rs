//! Approximate k-nearest-neighbor search where every query carries its own
//! L_p metric parameter.
//!
//! Two HNSW graphs are built under fixed base metrics (L_1 and L_2 by
//! default, or L_0.5 and L_1 for the low-p variant). A query under an
//! arbitrary p in the supported range draws candidates from the closer base
//! index and re-ranks them by exact L_p distance with early termination; see
//! [`uhnsw`].
//!
//! ```
//! use std::sync::Arc;
//! use uhnsw::{gen_synthetic, Distribution, HnswIndex, HnswParams, MetricParam, Uhnsw, UhnswParams};
//!
//! let data = Arc::new(gen_synthetic(500, 8, Distribution::Gaussian, 1).unwrap());
//! let build = |m| HnswIndex::build(data.clone(), HnswParams::new(m).with_m(8).with_ef_construction(64));
//! let index = Uhnsw::new(
//!     build(MetricParam::L1).unwrap(),
//!     build(MetricParam::L2).unwrap(),
//!     UhnswParams { t: 100, ef_search: 100, ..UhnswParams::default() },
//! )
//! .unwrap();
//! let out = index.query_vec(data.row(0), MetricParam::new(0.7).unwrap(), 10).unwrap();
//! assert_eq!(out.results[0].id, 0);
//! ```

pub mod dataset;
pub mod error;
pub mod hnsw;
pub mod metrics;
pub mod oracle;
pub mod uhnsw;
pub mod vecs;

pub use dataset::{gen_synthetic, Dataset, Distribution};
pub use error::{Error, Result};
pub use hnsw::{HnswIndex, HnswParams, ScoredId};
pub use metrics::{
    lp_distance, lp_distance_pth_power, time_distance_kernel, MetricParam, Tier, Vector,
};
pub use oracle::{brute_force_knn, recall, GroundTruth};
pub use uhnsw::{
    idealized_recall, verify_candidates, CandidateSource, ExactCandidates, QueryOutput, QueryStats,
    QueryTuple, Uhnsw, UhnswParams, Variant,
};
