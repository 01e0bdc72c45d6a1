//! Decision-focused learning for graph optimization.
//!
//! Graph-convolutional node embeddings feed a differentiable soft k-means
//! layer. Its soft assignments decode into solutions for community detection
//! (modularity) and minmax facility location, and the whole pipeline trains
//! end to end on the decision objective measured on observed edges.

pub mod baselines;
pub mod decisions;
pub mod error;
pub mod gcn;
pub mod harness;
pub mod graph;
pub mod softkmeans;
pub mod tensor;
pub mod twostage;

pub use error::{Error, Result};
