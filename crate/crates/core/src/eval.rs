//! Plaintext versus protected comparison: sizes, k-modes and k-NN timings,
//! and how well the protected run reproduces the plaintext one.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{encoded_len, IndexedDataset};
use crate::error::{Error, Result};
use crate::ml::PermutationSet;
use crate::ml::{agreement, kmodes, knn_batch, rand_index, transpose_partition, KModesConfig};
use crate::similarity::SimilarityMeasure;
use crate::stats::median;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Used for both runs. Iteration counts are made equal by disabling
    /// early stopping.
    pub kmodes: KModesConfig,
    /// Neighbours for k-NN; `0` skips classification.
    pub knn_k: usize,
    pub knn_measure: SimilarityMeasure,
    /// Timed repetitions per phase.
    pub runs: usize,
    /// Untimed repetitions before timing.
    pub warmup: usize,
}

impl BenchConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            kmodes: KModesConfig {
                seed,
                ..KModesConfig::new(k)
            },
            knn_k: 5,
            knn_measure: SimilarityMeasure::HammingSimilarity,
            runs: 5,
            warmup: 1,
        }
    }
}

pub struct BenchInputs<'a> {
    pub train_plain: &'a IndexedDataset,
    pub train_protected: &'a IndexedDataset,
    /// Map from protected train indexes back to plaintext ones.
    pub permutations: &'a PermutationSet,
    /// Validation queries, both sides in the same record order.
    pub val: Option<(&'a IndexedDataset, &'a IndexedDataset)>,
    pub train_id: String,
    pub val_id: Option<String>,
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIds {
    pub train: String,
    pub val: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sizes {
    pub plaintext_bytes: u64,
    pub protected_bytes: u64,
    pub plaintext_payload_bytes: u64,
    pub protected_payload_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Median over the timed runs.
    pub kmodes_ms: f64,
    pub kmodes_samples_ms: Vec<f64>,
    pub knn_ms: Option<f64>,
    pub knn_samples_ms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub plaintext: PhaseTimings,
    pub protected: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub kmodes: u64,
    pub data: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEcho {
    pub k: usize,
    pub iterations: usize,
    pub distance: SimilarityMeasure,
    pub knn_k: usize,
    pub knn_measure: SimilarityMeasure,
    pub runs: usize,
    pub warmup: usize,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub report_version: u32,
    pub tool_version: String,
    pub dataset: DatasetIds,
    pub scheme: String,
    pub delta: String,
    pub n_in: u32,
    pub n_out: u32,
    pub sizes: Sizes,
    /// HAI1 file bytes, plaintext over protected.
    pub size_ratio: f64,
    pub payload_ratio: f64,
    pub timings: Timings,
    /// k-modes median time, plaintext over protected.
    pub speedup: f64,
    pub knn_speedup: Option<f64>,
    /// Plaintext partition against the protected one mapped back to
    /// plaintext indexes.
    pub rand_index: f64,
    pub knn_agreement: Option<f64>,
    pub knn_accuracy_plaintext: Option<f64>,
    pub knn_accuracy_protected: Option<f64>,
    pub seeds: Seeds,
    pub config: BenchEcho,
}

/// Pass/fail bounds for `bench --check`.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub min_rand_index: f64,
    pub min_speedup: f64,
    pub min_knn_agreement: f64,
    /// Allowed relative deviation of the size ratio from delta.
    pub size_ratio_tolerance: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_rand_index: 0.98,
            min_speedup: 2.0,
            min_knn_agreement: 0.98,
            size_ratio_tolerance: 0.2 / 3.0,
        }
    }
}

fn time_runs<T>(
    warmup: usize,
    runs: usize,
    mut f: impl FnMut() -> Result<T>,
) -> Result<(T, Vec<f64>)> {
    for _ in 0..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let t = Instant::now();
        let out = f()?;
        samples.push(t.elapsed().as_secs_f64() * 1e3);
        last = Some(out);
    }
    Ok((last.expect("at least one run"), samples))
}

fn accuracy(pred: &[u32], truth: Option<Vec<u32>>) -> Result<Option<f64>> {
    truth.map(|t| agreement(pred, &t)).transpose()
}

pub fn run_bench(inputs: &BenchInputs<'_>, cfg: &BenchConfig) -> Result<EvalReport> {
    if cfg.runs == 0 {
        return Err(Error::param("need at least one timed run"));
    }
    let (plain, prot) = (inputs.train_plain, inputs.train_protected);
    if plain.len() != prot.len() {
        return Err(Error::RecordSetMismatch);
    }
    let pmeta = prot.meta();
    if !pmeta.scheme.is_protected() || plain.meta().scheme.is_protected() {
        return Err(Error::Dataset(
            "bench needs a plaintext and a protected dataset".into(),
        ));
    }
    let plain_bits = plain.bitvectors()?;
    let prot_bits = prot.bitvectors()?;
    let mut km = cfg.kmodes.clone();
    km.stop_on_convergence = false;

    let (plain_res, plain_km) = time_runs(cfg.warmup, cfg.runs, || kmodes(&plain_bits, &km))?;
    let (prot_res, prot_km) = time_runs(cfg.warmup, cfg.runs, || kmodes(&prot_bits, &km))?;
    let plain_part = plain_res.partition_for(&plain.indexes())?;
    let prot_part = prot_res.partition_for(&prot.indexes())?;
    let ri = rand_index(
        &plain_part,
        &transpose_partition(&prot_part, inputs.permutations)?,
    )?;

    let mut knn_fields = (None, None, None, Vec::new(), Vec::new(), None, None);
    if let (Some((vp, vq)), true) = (inputs.val, cfg.knn_k > 0) {
        if vp.len() != vq.len() {
            return Err(Error::RecordSetMismatch);
        }
        let (lp, lq) = (plain.labels()?, prot.labels()?);
        let (qp, qq) = (vp.bitvectors()?, vq.bitvectors()?);
        let (pred_p, tp) = time_runs(cfg.warmup, cfg.runs, || {
            knn_batch(&plain_bits, &lp, &qp, cfg.knn_k, cfg.knn_measure)
        })?;
        let (pred_q, tq) = time_runs(cfg.warmup, cfg.runs, || {
            knn_batch(&prot_bits, &lq, &qq, cfg.knn_k, cfg.knn_measure)
        })?;
        let truth = vp.has_labels().then(|| vp.labels()).transpose()?;
        knn_fields = (
            Some(agreement(&pred_p, &pred_q)?),
            Some(median(&tp)),
            Some(median(&tq)),
            tp,
            tq,
            accuracy(&pred_p, truth.clone())?,
            accuracy(&pred_q, truth)?,
        );
    }
    let (knn_agreement, knn_p_ms, knn_q_ms, knn_p_samples, knn_q_samples, acc_p, acc_q) =
        knn_fields;

    let sizes = Sizes {
        plaintext_bytes: encoded_len(plain),
        protected_bytes: encoded_len(prot),
        plaintext_payload_bytes: plain.payload_bytes(),
        protected_payload_bytes: prot.payload_bytes(),
    };
    let (km_p, km_q) = (median(&plain_km), median(&prot_km));
    Ok(EvalReport {
        report_version: REPORT_VERSION,
        tool_version: format!("hai {}", env!("CARGO_PKG_VERSION")),
        dataset: DatasetIds {
            train: inputs.train_id.clone(),
            val: inputs.val_id.clone(),
        },
        scheme: format!("{:?}", pmeta.scheme),
        delta: pmeta.delta.clone(),
        n_in: pmeta.n_in,
        n_out: pmeta.n_out,
        size_ratio: sizes.plaintext_bytes as f64 / sizes.protected_bytes as f64,
        payload_ratio: sizes.plaintext_payload_bytes as f64 / sizes.protected_payload_bytes as f64,
        sizes,
        timings: Timings {
            plaintext: PhaseTimings {
                kmodes_ms: km_p,
                kmodes_samples_ms: plain_km,
                knn_ms: knn_p_ms,
                knn_samples_ms: knn_p_samples,
            },
            protected: PhaseTimings {
                kmodes_ms: km_q,
                kmodes_samples_ms: prot_km,
                knn_ms: knn_q_ms,
                knn_samples_ms: knn_q_samples,
            },
        },
        speedup: km_p / km_q,
        knn_speedup: knn_p_ms.zip(knn_q_ms).map(|(p, q)| p / q),
        rand_index: ri,
        knn_agreement,
        knn_accuracy_plaintext: acc_p,
        knn_accuracy_protected: acc_q,
        seeds: Seeds {
            kmodes: km.seed,
            data: inputs.data_seed,
        },
        config: BenchEcho {
            k: km.k,
            iterations: km.iterations,
            distance: km.distance,
            knn_k: cfg.knn_k,
            knn_measure: cfg.knn_measure,
            runs: cfg.runs,
            warmup: cfg.warmup,
            threads: rayon::current_num_threads(),
        },
    })
}

impl EvalReport {
    /// Threshold violations, empty when every check passes.
    pub fn check(&self, t: &Thresholds) -> Vec<String> {
        let mut failures = Vec::new();
        if self.rand_index < t.min_rand_index {
            failures.push(format!(
                "rand index {:.4} < {}",
                self.rand_index, t.min_rand_index
            ));
        }
        if self.speedup < t.min_speedup {
            failures.push(format!("speed-up {:.3} < {}", self.speedup, t.min_speedup));
        }
        if let Some(a) = self.knn_agreement {
            if a < t.min_knn_agreement {
                failures.push(format!("k-NN agreement {a:.4} < {}", t.min_knn_agreement));
            }
        }
        if let Ok(delta) = self.delta.parse::<f64>() {
            if (self.size_ratio / delta - 1.0).abs() > t.size_ratio_tolerance {
                failures.push(format!(
                    "size ratio {:.3} too far from delta {}",
                    self.size_ratio, self.delta
                ));
            }
        }
        failures
    }

    /// Copy with wall-clock fields cleared, for comparing reruns.
    pub fn without_timing(&self) -> Self {
        let clear = |p: &PhaseTimings| PhaseTimings {
            kmodes_ms: 0.0,
            kmodes_samples_ms: vec![],
            knn_ms: p.knn_ms.map(|_| 0.0),
            knn_samples_ms: vec![],
        };
        Self {
            timings: Timings {
                plaintext: clear(&self.timings.plaintext),
                protected: clear(&self.timings.protected),
            },
            speedup: 0.0,
            knn_speedup: self.knn_speedup.map(|_| 0.0),
            config: BenchEcho {
                threads: 0,
                ..self.config.clone()
            },
            ..self.clone()
        }
    }

    /// Aligned two-column summary.
    pub fn table(&self) -> String {
        let opt =
            |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
        let rows = [
            ("dataset", self.dataset.train.clone()),
            ("scheme", format!("{} delta={}", self.scheme, self.delta)),
            ("n_in -> n_out", format!("{} -> {}", self.n_in, self.n_out)),
            ("plaintext bytes", self.sizes.plaintext_bytes.to_string()),
            ("protected bytes", self.sizes.protected_bytes.to_string()),
            ("size ratio", format!("{:.4}", self.size_ratio)),
            ("payload ratio", format!("{:.4}", self.payload_ratio)),
            (
                "k-modes plaintext ms",
                format!("{:.1}", self.timings.plaintext.kmodes_ms),
            ),
            (
                "k-modes protected ms",
                format!("{:.1}", self.timings.protected.kmodes_ms),
            ),
            ("speed-up", format!("{:.3}", self.speedup)),
            ("k-NN plaintext ms", opt(self.timings.plaintext.knn_ms, 1)),
            ("k-NN protected ms", opt(self.timings.protected.knn_ms, 1)),
            ("rand index", format!("{:.4}", self.rand_index)),
            ("k-NN agreement", opt(self.knn_agreement, 4)),
            (
                "k-NN accuracy plaintext",
                opt(self.knn_accuracy_plaintext, 4),
            ),
            (
                "k-NN accuracy protected",
                opt(self.knn_accuracy_protected, 4),
            ),
        ];
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::protect_dataset;
    use crate::data::synth::{gen_synthetic_cyber, SynthConfig};
    use crate::key::SecretKey;
    use crate::sketch::{Delta, Scheme, SketchParams, Sketcher};

    #[test]
    fn small_bench() {
        let (tr, va) = gen_synthetic_cyber(&SynthConfig {
            n_train: 80,
            n_val: 20,
            n_feat: 3_000,
            ..SynthConfig::default()
        })
        .unwrap();
        let key = SecretKey::from_seed(1, 0);
        let sk = Sketcher::new(
            &key,
            SketchParams::new(Scheme::BinarySample, Delta::parse("3").unwrap(), 3_000).unwrap(),
        )
        .unwrap();
        let ptr = protect_dataset(&tr, &sk, true, &key).unwrap();
        let pva = protect_dataset(&va, &sk, false, &key).unwrap();
        let inputs = BenchInputs {
            train_plain: &tr,
            train_protected: &ptr.dataset,
            permutations: &ptr.permutations,
            val: Some((&va, &pva.dataset)),
            train_id: "synthetic".into(),
            val_id: None,
            data_seed: Some(0),
        };
        let cfg = BenchConfig {
            runs: 2,
            warmup: 0,
            ..BenchConfig::new(2, 3)
        };
        let r = run_bench(&inputs, &cfg).unwrap();
        assert_eq!(r.rand_index, 1.0);
        assert_eq!(r.knn_agreement, Some(1.0));
        assert_eq!(r.timings.plaintext.kmodes_samples_ms.len(), 2);
        assert!((r.payload_ratio - 375.0 / 125.0).abs() < 1e-12);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["report_version"], 1);
        assert!(json.get("knn_accuracy_plaintext").is_some());
        assert_eq!(
            run_bench(&inputs, &cfg).unwrap().without_timing(),
            r.without_timing()
        );
        assert!(r.table().contains("rand index"));
        let strict = Thresholds {
            min_speedup: 1e9,
            ..Thresholds::default()
        };
        assert_eq!(r.check(&strict).len(), 1);
    }
}
