//! `hai`: protect datasets with keyed sketches and evaluate models on them.

mod attack;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use hai_core::data::{
    self, derive_permutation_set, protect_dataset, write_hai1, write_idx, ImageSynthConfig,
    IndexedDataset, PayloadKind, SynthConfig,
};
use hai_core::eval::{run_bench, BenchConfig, BenchInputs, Thresholds};
use hai_core::key::{read_key_file, write_key_file};
use hai_core::ml::{
    agreement, kmodes, knn_batch, knn_bytes_batch, rand_index, transpose_partition, InitMethod,
    KModesConfig, Partition, PermutationSet,
};
use hai_core::{Delta, Scheme, SecretKey, SimilarityMeasure, SketchParams, Sketcher};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] hai_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("check failed: {}", .0.join("; "))]
    Check(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser, Debug)]
#[command(
    name = "hai",
    version,
    about = "Keyed similarity-preserving sketches for datasets"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "HAI_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a fresh 256-bit key file.
    Genkey {
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Generate a synthetic dataset.
    GenSynth(GenSynthArgs),
    /// Convert IDX image and label files to HAI1.
    IngestIdx {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sketch every record of a dataset.
    Protect(ProtectArgs),
    /// k-modes clustering; writes a partition file.
    Cluster(ClusterArgs),
    /// k-NN classification of a query set against a labelled training set.
    Classify(ClassifyArgs),
    /// Rand index between two partition files.
    RandIndex { a: PathBuf, b: PathBuf },
    /// Compare plaintext and protected runs: sizes, timings, agreement.
    Bench(BenchArgs),
    /// Run an attack against protected data.
    #[command(subcommand)]
    Attack(attack::AttackCommand),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    Cyber,
    Images,
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    kind: SynthKind,
    /// Output directory.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    /// Features per record (cyber).
    #[arg(long, default_value_t = 49_955)]
    n_feat: usize,
    #[arg(long)]
    classes: Option<u16>,
    #[arg(long, default_value_t = 0.5)]
    p_base: f64,
    #[arg(long, default_value_t = 0.1)]
    p_flip: f64,
    /// Pixel noise amplitude (images).
    #[arg(long, default_value_t = 24)]
    noise: u8,
    /// Also write one file per record (cyber).
    #[arg(long)]
    export_files: bool,
}

#[derive(Args, Debug)]
struct ProtectArgs {
    #[arg(long)]
    key: PathBuf,
    #[arg(long)]
    delta: Delta,
    #[arg(long, default_value = "binary")]
    scheme: Scheme,
    /// HAI1 or IDX images file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Labels for an IDX input.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Shuffle records within each class and reindex them.
    #[arg(long)]
    permute_classes: bool,
    /// Output length instead of floor(n_in / delta).
    #[arg(long)]
    n_out: Option<u32>,
    #[arg(long)]
    strip_labels: bool,
    /// Bits per projected element (real scheme).
    #[arg(long)]
    quant_bits: Option<u8>,
}

#[derive(Args, Debug, Clone)]
struct KModesArgs {
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = KModesConfig::DEFAULT_ITERATIONS)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "hamming")]
    distance: SimilarityMeasure,
    #[arg(long, value_enum, default_value_t = InitArg::Spread)]
    init: InitArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InitArg {
    Spread,
    Random,
}

impl KModesArgs {
    fn config(&self) -> KModesConfig {
        KModesConfig {
            k: self.k,
            iterations: self.iterations,
            seed: self.seed,
            distance: self.distance,
            init: match self.init {
                InitArg::Spread => InitMethod::Spread,
                InitArg::Random => InitMethod::Random,
            },
            ..KModesConfig::new(self.k)
        }
    }
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    kmodes: KModesArgs,
    /// Partition file to write.
    #[arg(long)]
    out: PathBuf,
    /// Plaintext dataset the input was protected from; with --key, the
    /// partition is written in plaintext indexes.
    #[arg(long, requires = "key")]
    plaintext: Option<PathBuf>,
    #[arg(long, requires = "plaintext")]
    key: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    query: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Default: hamming for bits, euclidean for byte vectors.
    #[arg(long)]
    measure: Option<SimilarityMeasure>,
    /// Predictions file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Predictions file to compare against.
    #[arg(long)]
    agree_with: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Generate synthetic data and a key in memory instead of reading files.
    #[arg(long, conflicts_with_all = ["train_plain", "train_protected", "key"])]
    synthetic: bool,
    #[arg(long)]
    train_plain: Option<PathBuf>,
    #[arg(long)]
    train_protected: Option<PathBuf>,
    #[arg(long)]
    val_plain: Option<PathBuf>,
    #[arg(long)]
    val_protected: Option<PathBuf>,
    /// Key used for protection; recovers the class permutations.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value = "3")]
    delta: Delta,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    #[arg(long, default_value_t = 2_000)]
    n_train: usize,
    #[arg(long, default_value_t = 200)]
    n_val: usize,
    #[arg(long, default_value_t = 49_955)]
    n_feat: usize,
    #[arg(long, default_value_t = 0.1)]
    p_flip: f64,
    #[command(flatten)]
    kmodes: KModesArgs,
    #[arg(long, default_value_t = 5)]
    knn_k: usize,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 4 if any acceptance threshold is missed.
    #[arg(long)]
    check: bool,
}

pub fn load_key(path: &Path) -> CliResult<SecretKey> {
    let kf = read_key_file(path)?;
    if kf.insecure_mode {
        warn!(
            "{}: key file is readable beyond its owner (expected mode 0400)",
            path.display()
        );
    }
    Ok(kf.key)
}

/// Read a HAI1 file, or an IDX images file with optional labels.
pub fn load_dataset(path: &Path, labels: Option<&Path>) -> CliResult<IndexedDataset> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(data::hai1::MAGIC) {
        if labels.is_some() {
            return Err(usage("--labels applies only to IDX input"));
        }
        return Ok(data::decode_hai1(&bytes)?);
    }
    let lab = labels.map(fs::read).transpose()?;
    Ok(data::decode_idx(&bytes, lab.as_deref())?.dataset)
}

pub fn write_json(value: &impl serde::Serialize, out: Option<&Path>) -> CliResult {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match out {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn gen_synth(a: &GenSynthArgs) -> CliResult {
    fs::create_dir_all(&a.out_dir)?;
    match a.kind {
        SynthKind::Cyber => {
            let d = SynthConfig::default();
            let cfg = SynthConfig {
                seed: a.seed,
                n_train: a.n_train.unwrap_or(d.n_train),
                n_val: a.n_val.unwrap_or(d.n_val),
                n_feat: a.n_feat,
                classes: a.classes.unwrap_or(d.classes),
                p_base: a.p_base,
                p_flip: a.p_flip,
            };
            let (train, val) = data::gen_synthetic_cyber(&cfg)?;
            write_hai1(&train, &a.out_dir.join("train.hai1"), false)?;
            write_hai1(&val, &a.out_dir.join("val.hai1"), false)?;
            if a.export_files {
                data::export_record_files(&train, &a.out_dir.join("files"), "training")?;
                data::export_record_files(&val, &a.out_dir.join("files"), "validation")?;
            }
            println!(
                "wrote {} + {} records of {} bits",
                train.len(),
                val.len(),
                cfg.n_feat
            );
        }
        SynthKind::Images => {
            let d = ImageSynthConfig::default();
            let cfg = ImageSynthConfig {
                seed: a.seed,
                n_train: a.n_train.unwrap_or(d.n_train),
                n_val: a.n_val.unwrap_or(d.n_val),
                classes: a.classes.unwrap_or(d.classes),
                noise: a.noise,
                ..d
            };
            let (train, val) = data::gen_synthetic_images(&cfg)?;
            let dims = [cfg.rows, cfg.cols];
            for (ds, prefix) in [(&train, "train"), (&val, "t10k")] {
                write_idx(
                    ds,
                    &dims,
                    &a.out_dir.join(format!("{prefix}-images-idx3-ubyte")),
                    Some(&a.out_dir.join(format!("{prefix}-labels-idx1-ubyte"))),
                )?;
            }
            println!(
                "wrote {} + {} images of {}x{}",
                train.len(),
                val.len(),
                cfg.rows,
                cfg.cols
            );
        }
    }
    Ok(())
}

fn protect(a: &ProtectArgs) -> CliResult {
    let key = load_key(&a.key)?;
    let ds = load_dataset(&a.input, a.labels.as_deref())?;
    let n_in = ds.meta().n_in;
    let mut params = match a.n_out {
        Some(n) => SketchParams::with_n_out(a.scheme, a.delta.clone(), n_in, n)?,
        None => SketchParams::new(a.scheme, a.delta.clone(), n_in)?,
    };
    if let Some(bits) = a.quant_bits {
        if a.scheme != Scheme::RealProjection {
            return Err(usage("--quant-bits applies only to the real scheme"));
        }
        params = params.quant_bits(bits)?;
    }
    if a.permute_classes && !ds.has_labels() {
        return Err(usage("--permute-classes needs a labelled input"));
    }
    let sketcher = Sketcher::new(&key, params)?;
    let protected = protect_dataset(&ds, &sketcher, a.permute_classes, &key)?;
    write_hai1(&protected.dataset, &a.out, a.strip_labels)?;
    let before = data::encoded_len(&ds);
    let after = fs::metadata(&a.out)?.len();
    println!(
        "{} records, {} -> {} bytes per record, size ratio {:.4}",
        ds.len(),
        ds.meta().record_len,
        protected.dataset.meta().record_len,
        before as f64 / after as f64
    );
    Ok(())
}

fn cluster(a: &ClusterArgs) -> CliResult {
    let ds = load_dataset(&a.input, None)?;
    let rows = ds.bitvectors()?;
    let res = kmodes(&rows, &a.kmodes.config())?;
    let mut part = res.partition_for(&ds.indexes())?;
    if let (Some(plain), Some(key)) = (&a.plaintext, &a.key) {
        let plain = load_dataset(plain, None)?;
        let maps = if ds.meta().class_permuted {
            derive_permutation_set(&load_key(key)?, &plain)?
        } else {
            PermutationSet::identity(&plain.indexes())
        };
        part = transpose_partition(&part, &maps)?;
    }
    write_json(&part, Some(&a.out))?;
    println!(
        "k={} iterations={} converged={} objective={}",
        a.kmodes.k,
        res.iterations_run,
        res.converged,
        res.objective.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Predictions {
    k: usize,
    measure: SimilarityMeasure,
    /// `[query index, predicted label]` pairs in query order.
    predictions: Vec<(u32, u32)>,
    accuracy: Option<f64>,
}

fn classify(a: &ClassifyArgs) -> CliResult {
    let train = load_dataset(&a.train, None)?;
    let query = load_dataset(&a.query, None)?;
    if train.meta().payload_kind() != query.meta().payload_kind()
        || train.meta().record_len != query.meta().record_len
    {
        return Err(usage(
            "training and query sets have different payload layouts",
        ));
    }
    let labels = train.labels()?;
    let pred = match train.meta().payload_kind() {
        PayloadKind::Bits => {
            let m = a.measure.unwrap_or(SimilarityMeasure::HammingSimilarity);
            knn_batch(&train.bitvectors()?, &labels, &query.bitvectors()?, a.k, m)?
        }
        PayloadKind::U8Vector => {
            let m = a.measure.unwrap_or(SimilarityMeasure::Euclidean);
            knn_bytes_batch(&train.byte_rows()?, &labels, &query.byte_rows()?, a.k, m)?
        }
    };
    let accuracy = if query.has_labels() {
        Some(agreement(&pred, &query.labels()?)?)
    } else {
        None
    };
    let out = Predictions {
        k: a.k,
        measure: a.measure.unwrap_or(match train.meta().payload_kind() {
            PayloadKind::Bits => SimilarityMeasure::HammingSimilarity,
            PayloadKind::U8Vector => SimilarityMeasure::Euclidean,
        }),
        predictions: query
            .indexes()
            .into_iter()
            .zip(pred.iter().copied())
            .collect(),
        accuracy,
    };
    if let Some(path) = &a.out {
        write_json(&out, Some(path))?;
    }
    if let Some(acc) = accuracy {
        println!("accuracy {acc:.4}");
    }
    if let Some(other) = &a.agree_with {
        let other: Predictions =
            serde_json::from_slice(&fs::read(other)?).map_err(hai_core::Error::from)?;
        let theirs: Vec<u32> = other.predictions.iter().map(|p| p.1).collect();
        if theirs.len() != pred.len() {
            return Err(usage("prediction files cover different query counts"));
        }
        println!("agreement {:.4}", agreement(&pred, &theirs)?);
    }
    if a.out.is_none() && a.agree_with.is_none() {
        write_json(&out, None)?;
    }
    Ok(())
}

fn read_partition(path: &Path) -> CliResult<Partition> {
    Ok(serde_json::from_slice(&fs::read(path)?).map_err(hai_core::Error::from)?)
}

fn bench(a: &BenchArgs) -> CliResult {
    let owned;
    let (train_plain, train_prot, perms, val, train_id, data_seed) = if a.synthetic {
        let cfg = SynthConfig {
            seed: a.data_seed,
            n_train: a.n_train,
            n_val: a.n_val,
            n_feat: a.n_feat,
            p_flip: a.p_flip,
            ..SynthConfig::default()
        };
        let (tr, va) = data::gen_synthetic_cyber(&cfg)?;
        let key = SecretKey::from_seed(a.data_seed, 0);
        let params = SketchParams::new(Scheme::BinarySample, a.delta.clone(), a.n_feat as u32)?;
        let sk = Sketcher::new(&key, params)?;
        let ptr = protect_dataset(&tr, &sk, true, &key)?;
        let pva = protect_dataset(&va, &sk, false, &key)?;
        owned = (tr, ptr.dataset, ptr.permutations, Some((va, pva.dataset)));
        (
            &owned.0,
            &owned.1,
            &owned.2,
            owned.3.as_ref(),
            "synthetic-cyber".to_string(),
            Some(a.data_seed),
        )
    } else {
        let (Some(tp), Some(tq)) = (&a.train_plain, &a.train_protected) else {
            return Err(usage(
                "bench needs --synthetic or --train-plain and --train-protected",
            ));
        };
        let plain = load_dataset(tp, None)?;
        let prot = load_dataset(tq, None)?;
        let perms = if prot.meta().class_permuted {
            let key = a
                .key
                .as_ref()
                .ok_or_else(|| usage("--key is required for a class-permuted protected set"))?;
            derive_permutation_set(&load_key(key)?, &plain)?
        } else {
            PermutationSet::identity(&plain.indexes())
        };
        let val = match (&a.val_plain, &a.val_protected) {
            (Some(vp), Some(vq)) => Some((load_dataset(vp, None)?, load_dataset(vq, None)?)),
            (None, None) => None,
            _ => return Err(usage("--val-plain and --val-protected go together")),
        };
        owned = (plain, prot, perms, val);
        (
            &owned.0,
            &owned.1,
            &owned.2,
            owned.3.as_ref(),
            tp.display().to_string(),
            None,
        )
    };
    let inputs = BenchInputs {
        train_plain,
        train_protected: train_prot,
        permutations: perms,
        val: val.map(|(p, q)| (p, q)),
        train_id,
        val_id: val.map(|_| "validation".to_string()),
        data_seed,
    };
    let cfg = BenchConfig {
        kmodes: a.kmodes.config(),
        knn_k: a.knn_k,
        knn_measure: SimilarityMeasure::HammingSimilarity,
        runs: a.runs,
        warmup: a.warmup,
    };
    info!("benchmarking {} records", train_plain.len());
    let report = run_bench(&inputs, &cfg)?;
    print!("{}", report.table());
    if let Some(out) = &a.out {
        write_json(&report, Some(out))?;
    }
    if a.check {
        let failures = report.check(&Thresholds::default());
        if !failures.is_empty() {
            return Err(CliError::Check(failures));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Genkey { out, force } => {
            write_key_file(out, &SecretKey::generate(), *force)?;
            println!("wrote {}", out.display());
        }
        Command::GenSynth(a) => gen_synth(a)?,
        Command::IngestIdx {
            images,
            labels,
            out,
        } => {
            let d = data::read_idx(images, labels.as_deref())?;
            write_hai1(&d.dataset, out, false)?;
            println!(
                "{} records of {:?}, labels {}",
                d.dataset.len(),
                d.item_dims,
                if d.dataset.has_labels() {
                    "present"
                } else {
                    "absent"
                }
            );
        }
        Command::Protect(a) => protect(a)?,
        Command::Cluster(a) => cluster(a)?,
        Command::Classify(a) => classify(a)?,
        Command::RandIndex { a, b } => {
            println!(
                "{:.6}",
                rand_index(&read_partition(a)?, &read_partition(b)?)?
            );
        }
        Command::Bench(a) => bench(a)?,
        Command::Attack(a) => attack::run(a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hai: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
