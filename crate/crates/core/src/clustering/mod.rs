//! Per-group K-means weight clustering for convolution layers.

pub mod fslc;
pub mod kmeans;
pub mod layer;
pub mod metrics;

pub use fslc::{decode_fslc, encode_fslc};
pub use layer::{cluster_layer, cluster_layer_with_stats, reconstruct, ClusteredLayer, ClusteringStats};
pub use metrics::{compression_ratio, int8_fake_quantize, op_reduction_ratio, ConvShape};
