//! Clustering, classification and partition comparison on bitvectors.

pub mod kmodes;
pub mod knn;
pub mod partition;

pub use kmodes::{kmodes, EmptyClusterPolicy, InitMethod, KModesConfig, KModesResult};
pub use knn::{agreement, knn, knn_batch, knn_bytes, knn_bytes_batch};
pub use partition::{rand_index, transpose_partition, ClassPermutation, Partition, PermutationSet};
