use nnfs_core::synthetic::{bayes_assign, generate, OracleParams, SplitCounts, SyntheticSpec};
use nnfs_core::{
    compare_methods, nnfs_infer, sample_episode, write_emb1, EmbeddingDataset, EpisodeConfig,
    EpisodeMethod, FeatureMatrix, Method, NnfsConfig,
};

fn spec(dim: usize, sep: f64, shift: f64, test: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        task: "synthetic".into(),
        source_language: "en".into(),
        target_language: "xx".into(),
        dim,
        num_classes: 3,
        class_separation: sep,
        shift_vector_norm: shift,
        per_split_counts: SplitCounts {
            train: 1500,
            dev: 600,
            test,
        },
        noise_sigma: 1.0,
        seed,
    }
}

fn all_rows(d: &EmbeddingDataset) -> FeatureMatrix<f64> {
    let idx: Vec<usize> = (0..d.num_samples()).collect();
    d.gather(&idx).unwrap()
}

fn accuracy(pred: &[usize], d: &EmbeddingDataset) -> f64 {
    let hits = pred
        .iter()
        .zip(&d.labels)
        .filter(|(p, &t)| **p == t as usize)
        .count();
    hits as f64 / pred.len() as f64
}

fn column_means(rows: &[&[f32]], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0f64; dim];
    for r in rows {
        for (a, &v) in acc.iter_mut().zip(*r) {
            *a += v as f64;
        }
    }
    acc.iter().map(|a| a / rows.len() as f64).collect()
}

fn class_rows(d: &EmbeddingDataset, class: usize) -> Vec<&[f32]> {
    (0..d.num_samples())
        .filter(|&i| d.labels[i] as usize == class)
        .map(|i| d.feature_row(i))
        .collect()
}

#[test]
fn zero_shift_target_matches_source() {
    let data = generate(&spec(8, 4.0, 0.0, 3000, 5)).unwrap();
    let src: Vec<&[f32]> = (0..data.source_test.num_samples())
        .map(|i| data.source_test.feature_row(i))
        .collect();
    let tgt: Vec<&[f32]> = (0..data.target_test.num_samples())
        .map(|i| data.target_test.feature_row(i))
        .collect();
    let a = column_means(&src, 8);
    let b = column_means(&tgt, 8);
    let bound = 3.0 / (tgt.len() as f64).sqrt();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < bound, "{x} vs {y}");
    }
}

#[test]
fn same_seed_gives_identical_bytes() {
    let s = spec(6, 3.0, 2.0, 300, 77);
    let bytes = |d: &EmbeddingDataset| {
        let mut buf = Vec::new();
        write_emb1(d, &mut buf).unwrap();
        buf
    };
    let a = generate(&s).unwrap();
    let b = generate(&s).unwrap();
    for (x, y) in [
        (&a.source_train, &b.source_train),
        (&a.source_dev, &b.source_dev),
        (&a.source_test, &b.source_test),
        (&a.target_dev, &b.target_dev),
        (&a.target_test, &b.target_test),
    ] {
        assert_eq!(bytes(x), bytes(y));
    }
    let mean =
        |d: &nnfs_core::synthetic::SyntheticData| bytes(&d.mean.to_dataset("synthetic", "en"));
    assert_eq!(mean(&a), mean(&b));
}

#[test]
fn oracle_accuracy_at_ten_sigma() {
    let data = generate(&spec(8, 10.0, 10.0, 10_000, 3)).unwrap();
    let src = bayes_assign(&data.oracle, &all_rows(&data.source_test)).unwrap();
    assert!(accuracy(&src, &data.source_test) >= 0.999);
    let tgt = bayes_assign(&data.oracle.shifted(), &all_rows(&data.target_test)).unwrap();
    assert!(accuracy(&tgt, &data.target_test) >= 0.999);
}

#[test]
fn oracle_at_zero_separation_is_chance() {
    let data = generate(&spec(8, 0.0, 0.0, 10_000, 4)).unwrap();
    let pred = bayes_assign(&data.oracle, &all_rows(&data.source_test)).unwrap();
    let acc = accuracy(&pred, &data.source_test);
    assert!((acc - 1.0 / 3.0).abs() <= 0.02, "{acc}");
}

fn log_likelihood_argmax(params: &OracleParams, row: &[f64]) -> usize {
    let var = params.sigma * params.sigma;
    let d = row.len() as f64;
    let mut best = 0;
    let mut best_ll = f64::NEG_INFINITY;
    for (c, m) in params.class_means.iter().enumerate() {
        let sq: f64 = row.iter().zip(m).map(|(x, u)| (x - u).powi(2)).sum();
        let ll = -0.5 * d * (2.0 * std::f64::consts::PI * var).ln() - sq / (2.0 * var);
        if ll > best_ll {
            best_ll = ll;
            best = c;
        }
    }
    best
}

#[test]
fn bayes_assign_is_maximum_likelihood() {
    let mut s = spec(5, 1.5, 0.0, 1000, 8);
    s.noise_sigma = 0.7;
    let data = generate(&s).unwrap();
    let x = all_rows(&data.source_test);
    let pred = bayes_assign(&data.oracle, &x).unwrap();
    for (row, p) in x.iter_rows().zip(&pred) {
        assert_eq!(*p, log_likelihood_argmax(&data.oracle, row));
    }
}

#[test]
fn target_shift_equals_stored_offset() {
    let data = generate(&spec(8, 4.0, 6.0, 3000, 12)).unwrap();
    for class in 0..3 {
        let src = class_rows(&data.source_test, class);
        let tgt = class_rows(&data.target_test, class);
        let bound = 4.0 / (tgt.len() as f64).sqrt();
        let a = column_means(&src, 8);
        let b = column_means(&tgt, 8);
        for j in 0..8 {
            let diff = b[j] - a[j];
            assert!(
                (diff - data.oracle.offset[j]).abs() < bound,
                "class {class} coord {j}: {diff} vs {}",
                data.oracle.offset[j]
            );
        }
    }
}

#[test]
fn norm_and_shift_recover_unshifted_accuracy() {
    let sep = 4.0;
    let unshifted = generate(&spec(8, sep, 0.0, 1200, 21)).unwrap();
    let shifted = generate(&spec(8, sep, sep, 1200, 21)).unwrap();
    let cfg = EpisodeConfig::default();
    let nn: &dyn EpisodeMethod = &Method::Nn;
    let norm: &dyn EpisodeMethod = &Method::NnNorm;
    let base = compare_methods(
        &unshifted.target_dev,
        &unshifted.target_test,
        &[nn],
        None,
        cfg,
    )
    .unwrap();
    let corrected = compare_methods(
        &shifted.target_dev,
        &shifted.target_test,
        &[norm],
        Some(&shifted.mean),
        cfg,
    )
    .unwrap();
    let (b, c) = (base[0].mean_accuracy, corrected[0].mean_accuracy);
    assert!(c >= 0.95 * b, "shifted {c} vs unshifted {b}");
}

#[test]
fn nnfs_agrees_with_bayes_on_a_separated_episode() {
    let data = generate(&spec(8, 10.0, 10.0, 1200, 31)).unwrap();
    let cfg = EpisodeConfig::default();
    let ep = sample_episode(&data.target_dev, &data.target_test, cfg, 0).unwrap();
    let support_rows = ep.support_indices.concat();
    let query_rows = ep.query_indices.concat();
    let support = data.target_dev.gather::<f64>(&support_rows).unwrap();
    let query = data.target_test.gather::<f64>(&query_rows).unwrap();
    let labels: Vec<usize> = (0..3).flat_map(|k| std::iter::repeat_n(k, 5)).collect();
    let result = nnfs_infer(
        &support,
        &labels,
        &query,
        3,
        Some(&data.mean),
        NnfsConfig::NORM_PROTO_RECT,
    )
    .unwrap();
    let bayes = bayes_assign(&data.oracle.shifted(), &query).unwrap();
    let agree = result
        .hard_labels
        .iter()
        .zip(&bayes)
        .filter(|(local, b)| ep.selected_classes[**local] == **b)
        .count();
    assert!(agree >= 44, "{agree}/45");
}
