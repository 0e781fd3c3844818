// Wall-clock measurements; kept in their own binary so they do not compete
// with other tests for cores.

use nnfs_core::synthetic::{generate, SplitCounts, SyntheticSpec};
use nnfs_core::timing::{benchmark_methods, BenchConfig};
use nnfs_core::{EpisodeMethod, Method};

#[test]
fn bench_is_stable_and_head_is_slowest() {
    let data = generate(&SyntheticSpec {
        task: "bench".into(),
        source_language: "en".into(),
        target_language: "xx".into(),
        dim: 1024,
        num_classes: 3,
        class_separation: 4.0,
        shift_vector_norm: 4.0,
        per_split_counts: SplitCounts {
            train: 150,
            dev: 150,
            test: 300,
        },
        noise_sigma: 1.0,
        seed: 42,
    })
    .unwrap();
    let methods = [
        Method::ZeroShot,
        Method::NnNormProto,
        Method::HeadFt(Default::default()),
    ];
    let refs: Vec<&dyn EpisodeMethod> = methods.iter().map(|m| m as &dyn EpisodeMethod).collect();
    let run = || {
        benchmark_methods(
            &data.target_dev,
            &data.target_test,
            &refs,
            Some(&data.mean),
            BenchConfig::default(),
        )
        .unwrap()
    };
    let a = run();
    let b = run();
    println!("{}", a.to_markdown());
    println!("{}", b.to_markdown());

    let head = a.entry("head-ft").unwrap().seconds_per_episode;
    let nnfs = a.entry("nn+norm+proto").unwrap().seconds_per_episode;
    assert!(head > nnfs);
    for (x, y) in a.entries.iter().zip(&b.entries) {
        let rel = (x.seconds_per_episode - y.seconds_per_episode).abs()
            / x.seconds_per_episode.min(y.seconds_per_episode);
        assert!(
            rel <= 0.2,
            "{}: {} vs {}",
            x.method,
            x.seconds_per_episode,
            y.seconds_per_episode
        );
    }
}
