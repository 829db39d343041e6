use std::path::PathBuf;

use clap::{Args, Subcommand};

use hai_core::data::derive_permutation_set;
use hai_core::ml::{kmodes, PermutationSet};
use hai_core::security::{
    key_avalanche, linkage_attack, malleability_probe, model_extraction_check, preimage_attack,
    MalleabilityConfig, Matching,
};
use hai_core::{Delta, Scheme, SketchParams};

use crate::{load_dataset, load_key, usage, write_json, CliResult, KModesArgs};

#[derive(Subcommand, Debug)]
pub enum AttackCommand {
    /// Exhaustive preimage search on toy-size binary sketches.
    Preimage(PreimageArgs),
    /// Re-identify protected records from the plaintext set.
    Linkage(LinkageArgs),
    /// Sketch divergence between keys.
    Avalanche(AvalancheArgs),
    /// Forge sketches that a model accepts into a chosen cluster.
    Malleability(MalleabilityArgs),
    /// Compare models trained on two protected samples.
    Extraction(ExtractionArgs),
}

#[derive(Args, Debug)]
pub struct PreimageArgs {
    #[arg(long, default_value_t = 16)]
    n_in: u32,
    #[arg(long, default_value_t = 8)]
    n_out: u32,
    /// Attacker holds this key; without it, random candidate keys are tried.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 100)]
    candidates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct LinkageArgs {
    #[arg(long)]
    plain: PathBuf,
    #[arg(long)]
    protected: PathBuf,
    /// Key used for protection; only for scoring the attacker's matching.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value = "greedy")]
    matching: Matching,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AvalancheArgs {
    /// Plaintext sample to sketch.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "binary")]
    scheme: Scheme,
    #[arg(long, default_value = "3")]
    delta: Delta,
    #[arg(long, default_value_t = 100)]
    keys: usize,
    /// Compare against one-bit key changes instead of independent keys.
    #[arg(long)]
    flip_bits: bool,
    /// Records of the sample to use.
    #[arg(long, default_value_t = 50)]
    records: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MalleabilityArgs {
    /// Protected training set the model is fitted on.
    #[arg(long)]
    train: PathBuf,
    /// Protected sketches the attacker starts from.
    #[arg(long)]
    held_out: PathBuf,
    #[command(flatten)]
    kmodes: KModesArgs,
    /// Bits flipped per forgery; omit for no limit.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, default_value_t = 1_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    attack_seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExtractionArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[command(flatten)]
    kmodes: KModesArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cmd: &AttackCommand) -> CliResult {
    match cmd {
        AttackCommand::Preimage(a) => {
            let params = SketchParams::with_n_out(
                Scheme::BinarySample,
                Delta::parse("1.5")?,
                a.n_in,
                a.n_out,
            )?;
            let key = a.key.as_deref().map(load_key).transpose()?;
            let report = preimage_attack(&params, key.as_ref(), a.trials, a.candidates, a.seed)?;
            write_json(&report, a.out.as_deref())
        }
        AttackCommand::Linkage(a) => {
            let plain = load_dataset(&a.plain, None)?;
            let prot = load_dataset(&a.protected, None)?;
            let truth = if prot.meta().class_permuted {
                let key = a
                    .key
                    .as_deref()
                    .ok_or_else(|| usage("--key is needed to score a class-permuted set"))?;
                derive_permutation_set(&load_key(key)?, &plain)?
            } else {
                PermutationSet::identity(&plain.indexes())
            };
            write_json(
                &linkage_attack(&plain, &prot, &truth, a.matching)?,
                a.out.as_deref(),
            )
        }
        AttackCommand::Avalanche(a) => {
            let ds = load_dataset(&a.input, None)?;
            let n = a.records.min(ds.len());
            let (meta, records) = ds.into_parts();
            let sample =
                hai_core::data::IndexedDataset::new(meta, records.into_iter().take(n).collect())?;
            let params = SketchParams::new(a.scheme, a.delta.clone(), sample.meta().n_in)?;
            let report = key_avalanche(&params, &sample, a.keys, a.flip_bits, a.seed)?;
            write_json(&report, a.out.as_deref())
        }
        AttackCommand::Malleability(a) => {
            let train = load_dataset(&a.train, None)?.bitvectors()?;
            let held = load_dataset(&a.held_out, None)?.bitvectors()?;
            let model = kmodes(&train, &a.kmodes.config())?;
            let cfg = MalleabilityConfig {
                budget: a.budget,
                trials: a.trials,
                seed: a.attack_seed,
            };
            write_json(
                &malleability_probe(&train, &model.centers, &held, &cfg)?,
                a.out.as_deref(),
            )
        }
        AttackCommand::Extraction(a) => {
            let x = load_dataset(&a.a, None)?.bitvectors()?;
            let y = load_dataset(&a.b, None)?.bitvectors()?;
            write_json(
                &model_extraction_check(&x, &y, &a.kmodes.config())?,
                a.out.as_deref(),
            )
        }
    }
}
