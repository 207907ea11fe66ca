//! Sparse stochastic block models with arbitrary 0/1 modular structure:
//! graph generation, belief-propagation inference with EM parameter
//! learning, and detectability thresholds from linear stability of the
//! trivial BP fixed point.

pub mod bp;
pub mod em;
pub mod error;
pub mod eval;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sweep;
pub mod threshold;

pub use error::{Error, Result};
pub use generator::{generate, Graph, PartitionMode, PlantedPartition};
pub use model::{AffinityParams, ClusterDistribution, IndicatorMatrix, InferenceModel, ModelSpec, Structure};
