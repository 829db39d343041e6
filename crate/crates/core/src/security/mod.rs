//! Attacks against protected datasets, each reporting a success rate
//! against its chance level.

pub mod avalanche;
pub mod extraction;
pub mod linkage;
pub mod malleability;
pub mod preimage;
pub mod report;

pub use avalanche::{key_avalanche, sketch_divergence};
pub use extraction::{model_extraction_check, ExtractionReport};
pub use linkage::{linkage_attack, Matching};
pub use malleability::{malleability_probe, MalleabilityConfig};
pub use preimage::{
    count_preimages, keyless_recovery, preimage_attack, RecoveryStats, MAX_PREIMAGE_BITS,
};
pub use report::AttackReport;
