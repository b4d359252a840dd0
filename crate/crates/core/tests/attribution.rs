use std::path::PathBuf;

use attrlab::attribution::{channel_reduce, grid_csv, integrate, normalize_min_max, IntegrateSpec};
use attrlab::certainty::{BenchmarkSpec, HistogramConfig, Method};
use attrlab::data::{subsample_indices, synth, Dataset};
use attrlab::diagnostics::{alignment_study, augmentation_fragility, p_sweep, SweepSpec};
use attrlab::diff::{input_gradient, ScoreMode};
use attrlab::model::{
    init_model, read_checkpoint, AugmentSpec, Checkpoint, LayerSpec, ModelConfig, TrainDuration, TrainSpec,
};
use attrlab::render;
use attrlab::samplers::SamplerSpec;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn reference() -> (Checkpoint, Dataset) {
    let ckpt = read_checkpoint(fixture("reference.ckpt")).unwrap();
    (ckpt, synth::reference_corpus().unwrap().1)
}

fn all_samplers() -> Vec<SamplerSpec> {
    vec![
        SamplerSpec::bernoulli(0.7),
        SamplerSpec::gaussian(0.15),
        SamplerSpec::LinearScale,
        SamplerSpec::Identity,
    ]
}

#[test]
fn identity_integration_is_the_vanilla_gradient() {
    let (ckpt, test) = reference();
    for i in 0..5 {
        let x = test.image(i).unwrap();
        let y = test.label(i);
        let vanilla = channel_reduce(&input_gradient(&ckpt, &x, y, ScoreMode::Logit).unwrap().abs()).unwrap();
        for n in [1, 7, 50] {
            let map = integrate(&ckpt, &x, y, &IntegrateSpec::new(SamplerSpec::Identity, n, 3)).unwrap();
            assert_eq!(map.raw, vanilla);
        }
    }
}

#[test]
fn linear_model_integrates_to_weight_magnitudes() {
    let config = ModelConfig {
        input_shape: [1, 6, 5],
        layers: vec![LayerSpec::Dense { inputs: 30, units: 3 }],
        class_count: 3,
        seed: 11,
    };
    let ckpt = init_model(config).unwrap();
    let w = ckpt.param("layer0.weight").unwrap();
    let x = synth::generate("tiny", 1, 2).unwrap().image(0).unwrap();
    let x = attrlab::Tensor::new(vec![1, 6, 5], x.data()[..30].to_vec()).unwrap();
    for y in 0..3 {
        let expected: Vec<f64> = w.data()[y * 30..(y + 1) * 30].iter().map(|v| v.abs()).collect();
        for s in all_samplers() {
            let map = integrate(&ckpt, &x, y, &IntegrateSpec::new(s.clone(), 33, 5)).unwrap();
            assert_eq!(map.raw.data(), expected.as_slice(), "{}", s.label());
        }
    }
}

#[test]
fn standard_error_shrinks_as_one_over_root_n() {
    let (ckpt, test) = reference();
    let x = test.image(1).unwrap();
    let y = test.label(1);
    let se: Vec<f64> = [10, 40, 160]
        .iter()
        .map(|&n| {
            integrate(&ckpt, &x, y, &IntegrateSpec::new(SamplerSpec::bernoulli(0.7), n, 17))
                .unwrap()
                .meta
                .standard_error
        })
        .collect();
    for w in se.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() <= 0.6, "SE ratio {ratio} for {se:?}");
    }
}

#[test]
fn golden_explanation_csv_and_png() {
    let (ckpt, test) = reference();
    let spec = IntegrateSpec::new(SamplerSpec::bernoulli(0.7), 50, synth::REFERENCE_SEED);
    let map = normalize_min_max(&integrate(&ckpt, &test.image(0).unwrap(), test.label(0), &spec).unwrap());
    let golden = std::fs::read_to_string(fixture("golden_explanation.csv")).unwrap();
    assert_eq!(grid_csv(&map.values).unwrap(), golden);
    let png = render::heatmap_image(&map, 8).unwrap().to_png().unwrap();
    assert_eq!(png, std::fs::read(fixture("golden_explanation.png")).unwrap());
}

#[test]
fn integration_is_independent_of_pool_size() {
    let (ckpt, test) = reference();
    let x = test.image(2).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| integrate(&ckpt, &x, test.label(2), &IntegrateSpec::new(SamplerSpec::gaussian(0.15), 40, 9)))
            .unwrap()
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn pinned_subsample() {
    let pinned: Vec<usize> = std::fs::read_to_string(fixture("subsample_seed1860867_n100.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(subsample_indices(1000, 100, synth::REFERENCE_SEED).unwrap(), pinned);
}

#[test]
fn identity_group_projects_onto_natural_images() {
    let (ckpt, test) = reference();
    let samplers = [SamplerSpec::Identity, SamplerSpec::bernoulli(0.7)];
    let a = alignment_study(&ckpt, &test, &samplers, 60, 4).unwrap();
    assert!(a.distance_of("identity").unwrap() < 1e-9);
    assert_eq!(a.points.len(), 180);
    for (g, c) in a.groups.iter().zip(&a.centroids) {
        let members: Vec<&[f64; 2]> = a.points.iter().zip(&a.group_labels).filter(|(_, l)| *l == g).map(|(p, _)| p).collect();
        let mean_x = members.iter().map(|p| p[0]).sum::<f64>() / members.len() as f64;
        assert!((mean_x - c[0]).abs() < 1e-12);
    }
    assert_eq!(a, alignment_study(&ckpt, &test, &samplers, 60, 4).unwrap());
}

#[test]
fn sweep_endpoints() {
    let (ckpt, test) = reference();
    let spec = SweepSpec {
        grid: vec![0.0, 1.0],
        samples: 8,
        image_count: 6,
        seed: 21,
        histogram: HistogramConfig::new(32),
        score_mode: ScoreMode::Logit,
    };
    let sweep = p_sweep(&ckpt, &test, &spec).unwrap();
    let rows = subsample_indices(test.len(), 6, 21).unwrap();
    let vanilla = rows
        .iter()
        .map(|&r| input_gradient(&ckpt, &test.image(r).unwrap(), test.label(r), ScoreMode::Logit).unwrap().l2_norm())
        .sum::<f64>()
        / 6.0;
    assert!((sweep.mean_grad_norm[0] - vanilla).abs() < 1e-12);
    // all-dropped samples carry no information about the input
    assert!(sweep.mean_mi[1] < sweep.mean_mi[0]);
    assert_eq!(sweep, p_sweep(&ckpt, &test, &spec).unwrap());
}

#[test]
fn no_op_fine_tune_leaves_benchmark_unchanged() {
    let (ckpt, test) = reference();
    let train_set = synth::generate("few", 20, 1).unwrap();
    let aug = AugmentSpec {
        gaussian_sigma_range: [0.0, 0.0],
        luminance_range: [1.0, 1.0],
    };
    let fine_tune = TrainSpec {
        learning_rate: 1e-3,
        batch_size: 8,
        duration: TrainDuration::Batches(0),
        augmentation: None,
        seed: 1,
    };
    let bench = BenchmarkSpec {
        methods: vec![Method::new(SamplerSpec::bernoulli(0.7)), Method::new(SamplerSpec::LinearScale)],
        samples: 5,
        image_count: 4,
        seed: 2,
        histogram: HistogramConfig::new(16),
        score_mode: ScoreMode::Logit,
        normalize_to_linear_scale: true,
    };
    let (report, tuned) = augmentation_fragility(&ckpt, &train_set, &test, &aug, &fine_tune, &bench).unwrap();
    assert_eq!(tuned.params(), ckpt.params());
    assert_eq!(report.before, report.after);
    for c in &report.changes {
        assert_eq!((c.absolute_change, c.relative_change), (0.0, 0.0));
    }
    assert!(report.to_csv().starts_with("method,beforeMI_nats,afterMI_nats,absoluteChange,relativeChange\n"));
}
