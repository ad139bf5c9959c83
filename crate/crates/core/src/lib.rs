//! Merge chain-shaped convolutional architectures by graph contraction, size
//! the result against a weight budget, train it for binary segmentation, and
//! score the masks it produces.

pub mod arch_graph;
pub mod network_spec;
pub mod param_budget;
pub mod presets;
pub mod engine;
pub mod rng;
pub mod raster;
pub mod synth;
pub mod metrics;
pub mod augment;
