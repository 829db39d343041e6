//! Datasets, their on-disk formats, generators, and protection.

pub mod dataset;
pub mod hai1;
pub mod idx;
pub mod protect;
pub mod synth;

pub use dataset::{DatasetMeta, IndexedDataset, PayloadKind, Record, SchemeId, NO_LABEL};
pub use hai1::{decode_hai1, encode_hai1, encoded_len, read_hai1, write_hai1};
pub use idx::{decode_idx, encode_idx, read_idx, write_idx, IdxImages};
pub use protect::{derive_permutation_set, protect_dataset, Protected};
pub use synth::{
    export_record_files, gen_synthetic_cyber, gen_synthetic_images, ImageSynthConfig, SynthConfig,
};
