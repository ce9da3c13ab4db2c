//! Neighbor-aware meta classification and meta regression for semantic
//! segmentation.
//!
//! The pipeline turns softmax probability maps into per-frame graphs of
//! predicted segments ([`graph::build_graph`]), each node carrying dispersion
//! and geometry features and an adjusted-IoU target, then trains small graph
//! neural networks on them ([`trainer::train_run`]).

pub mod arch;
pub mod baselines;
pub mod cli;
pub mod dataio;
pub mod features;
pub mod graph;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod search;
pub mod segments;
pub mod synth;
pub mod trainer;
