//! Keyed, compressing, similarity-preserving sketches and the machinery to
//! evaluate them.
//!
//! A [`Sketcher`] is derived from a 256-bit [`SecretKey`] and a set of
//! [`SketchParams`]. Records sketched under the same key keep their pairwise
//! similarity structure, so unmodified clustering ([`ml::kmodes`]) and
//! classification ([`ml::knn`]) run directly on the protected data. The data
//! owner maps results back to plaintext records through the per-class index
//! permutations ([`ml::PermutationSet`]) instead of decrypting anything.
//!
//! The [`security`] module instantiates the threat model as runnable attacks,
//! and [`eval`] runs the plaintext-versus-protected comparison that produces
//! size, timing and agreement figures.

pub mod bitvec;
pub mod data;
pub mod error;
pub mod eval;
pub mod key;
pub mod ml;
pub mod security;
pub mod similarity;
pub mod sketch;
pub mod stats;

pub use bitvec::{BitVector, Tie};
pub use error::{Error, Result};
pub use key::{derive_stream, SecretKey};
pub use similarity::SimilarityMeasure;
pub use sketch::{
    derive_permutation, derive_positions, Delta, IndexPermutation, Scheme, SketchParams, Sketcher,
};
