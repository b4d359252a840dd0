//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use attrlab::certainty::{estimate_mi_tensors, HistogramConfig};
use attrlab::diff::{input_gradient, ScoreMode, Tape, Var};
use attrlab::model::{Checkpoint, LayerSpec, ModelConfig, NamedParam, TrainMeta};
use attrlab::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-6;

pub fn close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff <= ABS_FLOOR || diff <= REL_TOL * analytic.abs().max(numeric.abs())
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Values bounded away from zero so a step never crosses a ReLU kink.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Builds `f(inputs)` on a fresh tape and returns the scalar output node.
pub type Build = dyn Fn(&mut Tape, &[Var]) -> Var;

pub fn eval(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = build(&mut tape, &vars);
    tape.value(out).data()[0]
}

/// Checks every coordinate of every input; returns the number checked.
pub fn check(name: &str, build: &Build, inputs: &[Tensor]) -> usize {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    let mut checked = 0;
    for (k, t) in inputs.iter().enumerate() {
        let g = &grads[&vars[k]];
        for i in 0..t.numel() {
            let shifted = |d: f64| {
                let mut all = inputs.to_vec();
                let mut v = t.to_vec();
                v[i] += d;
                all[k] = Tensor::new(t.shape().to_vec(), v).unwrap();
                eval(build, &all)
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let analytic = g.data()[i];
            assert!(
                close(analytic, numeric),
                "{name}: input {k} coordinate {i}: analytic {analytic} vs numeric {numeric}"
            );
            checked += 1;
        }
    }
    checked
}

/// Reduces any node to a scalar through a fixed random projection.
pub fn project(tape: &mut Tape, v: Var, seed: u64) -> Var {
    let n = tape.value(v).numel();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random_tensor(&mut rng, &[1, n], 1.0));
    let b = tape.constant(Tensor::zeros(&[1]));
    let d = tape.dense(v, w, b).unwrap();
    tape.select_logit(d, 0).unwrap()
}

pub fn random_network(rng: &mut ChaCha8Rng, seed: u64) -> Checkpoint {
    let c = rng.random_range(1..=2);
    let side = [4, 6, 8][rng.random_range(0..3)];
    let k1 = [1, 3, 5][rng.random_range(0..3)];
    let o1 = rng.random_range(1..=4);
    let mut layers = vec![LayerSpec::Conv { out_channels: o1, kernel: k1 }, LayerSpec::Relu];
    let (mut ch, mut s) = (o1, side);
    if rng.random::<bool>() {
        layers.push(LayerSpec::MaxPool2);
        s /= 2;
    }
    if rng.random::<bool>() {
        let o2 = rng.random_range(1..=3);
        layers.push(LayerSpec::Conv { out_channels: o2, kernel: 3 });
        layers.push(LayerSpec::Relu);
        ch = o2;
    }
    let hidden = rng.random_range(2..=8);
    let classes = rng.random_range(2..=5);
    layers.push(LayerSpec::Dense { inputs: ch * s * s, units: hidden });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dense { inputs: hidden, units: classes });
    let config = ModelConfig {
        input_shape: [c, side, side],
        layers,
        class_count: classes,
        seed,
    };
    let params = config
        .parameter_shapes()
        .unwrap()
        .into_iter()
        .map(|(name, shape)| NamedParam {
            value: random_tensor(rng, &shape, 0.8),
            name,
        })
        .collect();
    Checkpoint::from_parts(config, params, TrainMeta::default()).unwrap()
}

pub fn score(ckpt: &Checkpoint, x: &Tensor, y: usize, mode: ScoreMode) -> f64 {
    let z = ckpt.logits(x).unwrap();
    match mode {
        ScoreMode::Logit => z.data()[y],
        ScoreMode::LogProbability => {
            let m = z.max();
            let lse = m + z.data().iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            z.data()[y] - lse
        }
    }
}

pub fn center(bin: usize, bins: usize) -> f64 {
    (bin as f64 + 0.5) / bins as f64
}

/// Expands a count table into `(x, z)` pairs whose values fall in the
/// table's cells.
pub fn pairs_from_table(table: &[Vec<u64>], bins: usize) -> (Tensor, Tensor) {
    let (mut xs, mut zs) = (Vec::new(), Vec::new());
    for (i, row) in table.iter().enumerate() {
        for (j, &count) in row.iter().enumerate() {
            for _ in 0..count {
                xs.push(center(i, bins));
                zs.push(center(j, bins));
            }
        }
    }
    let n = xs.len();
    (Tensor::new(vec![1, n], xs).unwrap(), Tensor::new(vec![1, n], zs).unwrap())
}

/// `sum p(i,j) ln(p(i,j) / (p(i) p(j)))` straight from the table.
pub fn brute_force_mi(table: &[Vec<u64>]) -> f64 {
    let total: u64 = table.iter().flatten().sum();
    let n = total as f64;
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64 / n).collect();
    let cols: Vec<f64> = (0..table[0].len())
        .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (rows[i] * cols[j])).ln();
            }
        }
    }
    mi
}

pub fn conv2d_all_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in [1, 3, 5] {
        let inputs = [
            random_tensor(&mut rng, &[2, 5, 4], 1.0),
            random_tensor(&mut rng, &[3, 2, k, k], 1.0),
            random_tensor(&mut rng, &[3], 1.0),
        ];
        let build = |t: &mut Tape, v: &[Var]| {
            let c = t.conv2d(v[0], v[1], v[2]).unwrap();
            project(t, c, 11)
        };
        assert!(check("conv2d", &build, &inputs) > 0);
    }
}

pub fn dense_all_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs = [
        random_tensor(&mut rng, &[2, 3], 1.0),
        random_tensor(&mut rng, &[4, 6], 1.0),
        random_tensor(&mut rng, &[4], 1.0),
    ];
    let build = |t: &mut Tape, v: &[Var]| {
        let d = t.dense(v[0], v[1], v[2]).unwrap();
        project(t, d, 12)
    };
    check("dense", &build, &inputs);
}

pub fn relu_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = [away_from_zero(&mut rng, &[3, 4])];
    let build = |t: &mut Tape, v: &[Var]| {
        let r = t.relu(v[0]).unwrap();
        project(t, r, 13)
    };
    check("relu", &build, &inputs);
}

pub fn maxpool_with_distinct_window_values() {
    // a shuffled arithmetic grid keeps every window's max well separated
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut vals: Vec<f64> = (0..2 * 6 * 5).map(|i| i as f64 * 0.01).collect();
    for i in (1..vals.len()).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    let inputs = [Tensor::new(vec![2, 6, 5], vals).unwrap()];
    let build = |t: &mut Tape, v: &[Var]| {
        let p = t.max_pool2(v[0]).unwrap();
        project(t, p, 14)
    };
    check("maxpool2", &build, &inputs);
}

pub fn add_scale_and_losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inputs = [random_tensor(&mut rng, &[5], 2.0), random_tensor(&mut rng, &[5], 2.0)];
    let add = |t: &mut Tape, v: &[Var]| {
        let s = t.add(v[0], v[1]).unwrap();
        let s = t.scale(s, -1.7).unwrap();
        project(t, s, 15)
    };
    check("add+scale", &add, &inputs);
    for target in 0..5 {
        let ce = move |t: &mut Tape, v: &[Var]| t.softmax_cross_entropy(v[0], target).unwrap();
        check("softmax_cross_entropy", &ce, &inputs[..1]);
        let sel = move |t: &mut Tape, v: &[Var]| t.select_logit(v[0], target).unwrap();
        check("select_logit", &sel, &inputs[..1]);
    }
}

/// Input gradients of `count` random networks in both score modes;
/// returns the number of coordinates checked.
pub fn random_networks(count: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(1_860_867);
    let mut checked = 0;
    for net in 0..count {
        let ckpt = random_network(&mut rng, net);
        let shape = ckpt.config().input_shape;
        let x = random_tensor(&mut rng, &shape, 1.0).map(|v| v.abs());
        for mode in [ScoreMode::Logit, ScoreMode::LogProbability] {
            let y = rng.random_range(0..ckpt.class_count());
            let g = input_gradient(&ckpt, &x, y, mode).unwrap();
            for i in 0..x.numel() {
                let at = |d: f64| {
                    let mut v = x.to_vec();
                    v[i] += d;
                    score(&ckpt, &Tensor::new(x.shape().to_vec(), v).unwrap(), y, mode)
                };
                let numeric = (at(STEP) - at(-STEP)) / (2.0 * STEP);
                assert!(
                    close(g.data()[i], numeric),
                    "net {net} {mode:?} coordinate {i}: analytic {} vs numeric {numeric}",
                    g.data()[i]
                );
                checked += 1;
            }
        }
    }
    checked
}

/// Estimator against the brute-force plug-in MI on `count` random tables.
pub fn random_tables(count: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(1_860_867);
    for t in 0..count {
        let bins = rng.random_range(2..=8);
        let sparsity = rng.random_range(0.0..0.6);
        let mut table: Vec<Vec<u64>> = (0..bins)
            .map(|_| {
                (0..bins)
                    .map(|_| if rng.random::<f64>() < sparsity { 0 } else { rng.random_range(1..40) })
                    .collect()
            })
            .collect();
        table[0][0] += 1;
        let (x, z) = pairs_from_table(&table, bins);
        let est = estimate_mi_tensors(&x, &z, &HistogramConfig::new(bins)).unwrap();
        let oracle = brute_force_mi(&table);
        assert!(
            (est.mi_nats - oracle).abs() < 1e-12,
            "table {t}: estimator {} vs brute force {oracle}",
            est.mi_nats
        );
        assert!((est.conditional_entropy_nats - (est.entropy_x_nats - est.mi_nats)).abs() < 1e-12);
        assert_eq!(est.certainty_lower_bound, (est.mi_nats - est.entropy_x_nats).exp());
    }
}
