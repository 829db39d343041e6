//! Protect, store, cluster and classify end to end; results map back to
//! plaintext records through the owner's permutations.

use hai_core::data::{
    decode_hai1, encode_hai1, gen_synthetic_cyber, gen_synthetic_images, protect_dataset, read_idx,
    write_idx, ImageSynthConfig, SynthConfig,
};
use hai_core::ml::{
    agreement, kmodes, knn_batch, rand_index, transpose_partition, KModesConfig, Partition,
};
use hai_core::{Delta, Scheme, SecretKey, SimilarityMeasure, SketchParams, Sketcher};

fn cyber() -> (
    hai_core::data::IndexedDataset,
    hai_core::data::IndexedDataset,
) {
    gen_synthetic_cyber(&SynthConfig {
        n_train: 300,
        n_val: 40,
        n_feat: 6_000,
        classes: 3,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn permuted_clustering_maps_back() {
    let (train, _) = cyber();
    let key = SecretKey::from_seed(1, 0);
    let params =
        SketchParams::new(Scheme::BinarySample, Delta::parse("3").unwrap(), 6_000).unwrap();
    let sk = Sketcher::new(&key, params).unwrap();
    let prot = protect_dataset(&train, &sk, true, &key).unwrap();
    assert!(prot.dataset.meta().class_permuted);

    // the stored form round-trips without labels
    let stored = decode_hai1(&encode_hai1(&prot.dataset, true)).unwrap();
    assert!(!stored.has_labels());
    assert_eq!(stored.len(), train.len());

    let cfg = KModesConfig::new(3);
    let plain = kmodes(&train.bitvectors().unwrap(), &cfg).unwrap();
    let on_prot = kmodes(&stored.bitvectors().unwrap(), &cfg).unwrap();
    let back = transpose_partition(
        &on_prot.partition_for(&stored.indexes()).unwrap(),
        &prot.permutations,
    )
    .unwrap();
    let ri = rand_index(&plain.partition_for(&train.indexes()).unwrap(), &back).unwrap();
    assert!(ri >= 0.98, "{ri}");
    // and against the generating classes
    let truth = Partition::from_indexed(&train.indexes(), &train.labels().unwrap()).unwrap();
    assert!(rand_index(&truth, &back).unwrap() >= 0.98);
}

#[test]
fn classification_agrees() {
    let (train, val) = cyber();
    let key = SecretKey::from_seed(2, 0);
    let params =
        SketchParams::new(Scheme::BinarySample, Delta::parse("3").unwrap(), 6_000).unwrap();
    let sk = Sketcher::new(&key, params).unwrap();
    let pt = protect_dataset(&train, &sk, false, &key).unwrap().dataset;
    let pv = protect_dataset(&val, &sk, false, &key).unwrap().dataset;
    let m = SimilarityMeasure::HammingSimilarity;
    let a = knn_batch(
        &train.bitvectors().unwrap(),
        &train.labels().unwrap(),
        &val.bitvectors().unwrap(),
        5,
        m,
    )
    .unwrap();
    let b = knn_batch(
        &pt.bitvectors().unwrap(),
        &pt.labels().unwrap(),
        &pv.bitvectors().unwrap(),
        5,
        m,
    )
    .unwrap();
    assert!(agreement(&a, &b).unwrap() >= 0.98);
}

#[test]
fn wrong_scheme_or_width_is_rejected() {
    let (train, _) = cyber();
    let key = SecretKey::from_seed(3, 0);
    let real = SketchParams::with_n_out(
        Scheme::RealProjection,
        Delta::parse("3").unwrap(),
        6_000,
        16,
    )
    .unwrap();
    assert!(protect_dataset(&train, &Sketcher::new(&key, real).unwrap(), false, &key).is_err());
    let narrow =
        SketchParams::new(Scheme::BinarySample, Delta::parse("3").unwrap(), 5_999).unwrap();
    assert!(protect_dataset(&train, &Sketcher::new(&key, narrow).unwrap(), false, &key).is_err());
    let unlabelled = train.without_labels();
    let ok = SketchParams::new(Scheme::BinarySample, Delta::parse("3").unwrap(), 6_000).unwrap();
    let sk = Sketcher::new(&key, ok).unwrap();
    assert!(protect_dataset(&unlabelled, &sk, true, &key).is_err());
    assert!(protect_dataset(&unlabelled, &sk, false, &key).is_ok());
}

#[test]
fn images_through_idx_and_projection() {
    let (train, _) = gen_synthetic_images(&ImageSynthConfig {
        n_train: 50,
        n_val: 5,
        ..ImageSynthConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    write_idx(&train, &[28, 28], &img, Some(&lab)).unwrap();
    let back = read_idx(&img, Some(&lab)).unwrap();
    assert_eq!(back.dataset, train);
    assert_eq!(back.item_dims, vec![28, 28]);

    let key = SecretKey::from_seed(4, 0);
    for (d, n_out) in [("3", 256), ("6", 132)] {
        let params =
            SketchParams::with_n_out(Scheme::RealProjection, Delta::parse(d).unwrap(), 784, n_out)
                .unwrap();
        let prot = protect_dataset(
            &back.dataset,
            &Sketcher::new(&key, params).unwrap(),
            true,
            &key,
        )
        .unwrap();
        assert_eq!(prot.dataset.meta().record_len, n_out);
        let again = decode_hai1(&encode_hai1(&prot.dataset, false)).unwrap();
        assert_eq!(again, prot.dataset);
        for c in prot.permutations.classes() {
            assert!(c.perm.is_bijection());
        }
    }
}
