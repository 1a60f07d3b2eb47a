mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use salnet_core::channels::ChannelConfig;
use salnet_core::cnn::*;
use salnet_core::contrast::{contrast_descriptors, rgb_to_hsi};
use salnet_core::fixation_map::build_wooding_map;
use salnet_core::metrics::{auc_fixations, AUC_LABEL};
use salnet_core::motion::{estimate_global_affine, residual_magnitude, residual_motion, AffineMotion, FlowField};
use salnet_core::pipeline::load_samples;
use salnet_core::plane::PlaneStack;
use salnet_core::sampler::{patch_origin, sample_frame, schedule_from_max, FrameSample};
use salnet_core::synthetic::{render_video, FixtureKind, FixtureSpec};

const FD_STEP: f64 = 1e-4;
const FD_TOL: f64 = 1e-3;

type Outcome = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Largest relative error between `analytic` and central differences of `f` at `x`.
fn fd_check(x: &[f64], analytic: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let mut p = x.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        p[i] = x[i] + FD_STEP;
        let up = f(&p);
        p[i] = x[i] - FD_STEP;
        let down = f(&p);
        p[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vol(shape: Shape, data: &[f64]) -> Volume {
    Volume::from_vec(shape.channels, shape.height, shape.width, data.to_vec()).unwrap()
}

fn layer_gradients(seed: u64) -> BTreeMap<&'static str, f64> {
    let mut r = rng(seed);
    let mut worst = BTreeMap::new();

    let g = ConvGeometry {
        in_channels: r.random_range(1..=3),
        out_channels: r.random_range(1..=3),
        kernel_h: r.random_range(1..=3),
        kernel_w: r.random_range(1..=3),
        stride: r.random_range(1..=2),
    };
    let (h, w) = (r.random_range(4..=8), r.random_range(4..=8));
    let x = random_volume(&mut r, g.in_channels, h, w);
    let w = uniform(&mut r, g.weight_len(), -1.0, 1.0);
    let b = uniform(&mut r, g.out_channels, -1.0, 1.0);
    let y = conv_forward(&x, &w, &b, &g).unwrap();
    let up = uniform(&mut r, y.data.len(), -1.0, 1.0);
    let (mut gw, mut gb) = (vec![0.0; w.len()], vec![0.0; b.len()]);
    let gx = conv_backward(&x, &w, &g, &vol(y.shape(), &up), &mut gw, &mut gb);
    let e = fd_check(&x.data, &gx.data, &mut |d| dot(&up, &conv_forward(&vol(x.shape(), d), &w, &b, &g).unwrap().data))
        .max(fd_check(&w, &gw, &mut |d| dot(&up, &conv_forward(&x, d, &b, &g).unwrap().data)))
        .max(fd_check(&b, &gb, &mut |d| dot(&up, &conv_forward(&x, &w, d, &g).unwrap().data)));
    worst.insert("conv", e);

    let (h, w) = (r.random_range(4..=9), r.random_range(4..=9));
    let x = random_volume(&mut r, 2, h, w);
    let (k, s) = (r.random_range(2..=3), r.random_range(1..=3));
    let (y, arg) = maxpool_forward(&x, k, s).unwrap();
    let up = uniform(&mut r, y.data.len(), -1.0, 1.0);
    let gx = maxpool_backward(x.shape(), &arg, &vol(y.shape(), &up));
    let e = fd_check(&x.data, &gx.data, &mut |d| dot(&up, &maxpool_forward(&vol(x.shape(), d), k, s).unwrap().0.data));
    worst.insert("maxpool", e);

    // keep inputs clear of the kink
    let data: Vec<f64> = uniform(&mut r, 3 * 5 * 5, 0.01, 1.0)
        .into_iter()
        .map(|v| if r.random_bool(0.5) { v } else { -v })
        .collect();
    let x = Volume::from_vec(3, 5, 5, data).unwrap();
    let up = uniform(&mut r, x.data.len(), -1.0, 1.0);
    let gx = relu_backward(&x, &vol(x.shape(), &up));
    let e = fd_check(&x.data, &gx.data, &mut |d| dot(&up, &relu(&vol(x.shape(), d)).data));
    worst.insert("relu", e);

    let p = LrnParams {
        size: if r.random_bool(0.5) { 3 } else { 5 },
        alpha: r.random_range(0.5..4.0),
        beta: 0.75,
    };
    let (h, w) = (r.random_range(3..=7), r.random_range(3..=7));
    let x = random_volume(&mut r, 2, h, w);
    let (y, scale) = lrn_forward(&x, &p).unwrap();
    let up = uniform(&mut r, y.data.len(), -1.0, 1.0);
    let gx = lrn_backward(&x, &scale, &p, &vol(y.shape(), &up));
    let e = fd_check(&x.data, &gx.data, &mut |d| dot(&up, &lrn_forward(&vol(x.shape(), d), &p).unwrap().0.data));
    worst.insert("lrn", e);

    let x = random_volume(&mut r, 2, 3, 3);
    let outs = r.random_range(1..=4);
    let w = uniform(&mut r, outs * x.data.len(), -1.0, 1.0);
    let b = uniform(&mut r, outs, -1.0, 1.0);
    let up = uniform(&mut r, outs, -1.0, 1.0);
    let (mut gw, mut gb) = (vec![0.0; w.len()], vec![0.0; outs]);
    let gx = inner_product_backward(&x, &w, &up, &mut gw, &mut gb);
    let e = fd_check(&x.data, &gx.data, &mut |d| dot(&up, &inner_product_forward(&vol(x.shape(), d), &w, &b).unwrap()))
        .max(fd_check(&w, &gw, &mut |d| dot(&up, &inner_product_forward(&x, d, &b).unwrap())))
        .max(fd_check(&b, &gb, &mut |d| dot(&up, &inner_product_forward(&x, &w, d).unwrap())));
    worst.insert("inner_product", e);

    let logits = uniform(&mut r, 2, -3.0, 3.0);
    let label = r.random_range(0..2);
    let probs = softmax(&logits);
    let analytic: Vec<f64> = probs.iter().enumerate().map(|(i, p)| p - f64::from(u8::from(i == label))).collect();
    let e = fd_check(&logits, &analytic, &mut |d| cross_entropy(&softmax(d), label));
    worst.insert("softmax_loss", e);

    worst.insert("network", network_gradient(&mut r));
    worst
}

pub fn tiny_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(3, 1, 4),
        LayerSpec::Relu,
        LayerSpec::Lrn {
            size: 3,
            alpha: 1.0,
            beta: 0.75,
        },
        LayerSpec::pool(2, 2),
        LayerSpec::conv(2, 1, 3),
        LayerSpec::Relu,
        LayerSpec::InnerProduct { outputs: 2 },
        LayerSpec::Softmax,
    ]
}

fn network_gradient(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let seed = r.random();
    let mut model = NetworkModel::initialized(Shape::new(2, 8, 8), tiny_layers(), Init::Msra, seed).unwrap();
    for p in model.params_mut() {
        let n = p.bias.len();
        p.bias = uniform(r, n, -0.1, 0.1);
    }
    let x = random_volume(r, 2, 8, 8);
    let label = r.random_range(0..2);
    let mut grads = model.zero_gradients();
    let cache = model.forward(&x).unwrap();
    let gx = model.backward(&cache, label, 1.0, &mut grads);
    let loss = |m: &NetworkModel, v: &Volume| cross_entropy(&m.probabilities(v).unwrap(), label);
    let mut worst = fd_check(&x.data, &gx.data, &mut |d| loss(&model, &vol(x.shape(), d)));
    for li in 0..model.layers().len() {
        for part in 0..2 {
            let base = model.params()[li].clone();
            let (vals, an) = if part == 0 {
                (base.weights.clone(), grads[li].weights.clone())
            } else {
                (base.bias.clone(), grads[li].bias.clone())
            };
            if vals.is_empty() {
                continue;
            }
            let mut probe = model.clone();
            let e = fd_check(&vals, &an, &mut |d| {
                let p = &mut probe.params_mut()[li];
                if part == 0 {
                    p.weights.copy_from_slice(d);
                } else {
                    p.bias.copy_from_slice(d);
                }
                loss(&probe, &x)
            });
            worst = worst.max(e);
        }
    }
    worst
}

fn criterion_1() -> Outcome {
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    for seed in 0..20 {
        for (k, v) in layer_gradients(seed) {
            let e = worst.entry(k).or_insert(0.0);
            *e = e.max(v);
        }
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let detail = worst.iter().map(|(k, v)| format!("{k}={v:.1e}")).collect::<Vec<_>>().join(" ");
    ensure(max <= FD_TOL, format!("20 seeds, max rel err {max:.2e} ({detail})"))
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (h, w) = (r.random_range(3..=14), r.random_range(3..=14));
        let g = ConvGeometry {
            in_channels: r.random_range(1..=4),
            out_channels: r.random_range(1..=5),
            kernel_h: r.random_range(1..=h.min(5)),
            kernel_w: r.random_range(1..=w.min(5)),
            stride: r.random_range(1..=3),
        };
        let x = random_volume(&mut r, g.in_channels, h, w);
        let wt = uniform(&mut r, g.weight_len(), -1.0, 1.0);
        let b = uniform(&mut r, g.out_channels, -1.0, 1.0);
        let fast = conv_forward(&x, &wt, &b, &g).unwrap();
        let slow = naive_conv(&x, &wt, &b, &g);
        assert_eq!(fast.shape(), slow.shape());
        worst = worst.max(max_abs_diff(&fast.data, &slow.data));

        let k = r.random_range(1..=h.min(w).min(4));
        let s = r.random_range(1..=3);
        let fast = maxpool_forward(&x, k, s).unwrap().0;
        let slow = naive_pool(&x, k, s);
        assert_eq!(fast.shape(), slow.shape());
        worst = worst.max(max_abs_diff(&fast.data, &slow.data));

        let p = LrnParams {
            size: [1, 3, 5][r.random_range(0..3)],
            alpha: r.random_range(0.0..3.0),
            beta: r.random_range(0.25..1.5),
        };
        let fast = lrn_forward(&x, &p).unwrap().0;
        worst = worst.max(max_abs_diff(&fast.data, &naive_lrn(&x, &p).data));
    }
    ensure(worst <= 1e-9, format!("200 shapes, max abs diff {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut gated = true;
    for _ in 0..25 {
        let img = PlaneStack::from_vec(16, 16, 3, uniform(&mut r, 16 * 16 * 3, 0.0, 1.0)).unwrap();
        let hsi = rgb_to_hsi(&img).unwrap();
        let v = contrast_descriptors(&hsi).v;
        for (i, want) in brute_contrast(&hsi).iter().enumerate() {
            for c in 0..7 {
                worst = worst.max((v.data()[i * 7 + c] - want[c]).abs());
            }
            let (v6, v7) = (v.data()[i * 7 + 5], v.data()[i * 7 + 6]);
            gated &= v6 == 0.0 || v6 == v7;
            gated &= v.data()[i * 7 + 2] <= v.data()[i * 7 + 1];
        }
    }
    let gray: Vec<f64> = (0..16 * 16).flat_map(|i| [i as f64 / 256.0; 3]).collect();
    let gray = contrast_descriptors(&rgb_to_hsi(&PlaneStack::from_vec(16, 16, 3, gray).unwrap()).unwrap()).v;
    let gray_zero = gray.data().iter().all(|&x| x == 0.0);
    ensure(
        worst <= 1e-9 && gated && gray_zero,
        format!("25 images, max abs diff {worst:.2e}, V6 gating exact {gated}, gray all zero {gray_zero}"),
    )
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let m = AffineMotion::new([
            r.random_range(-5.0..5.0),
            r.random_range(-0.05..0.05),
            r.random_range(-0.05..0.05),
            r.random_range(-5.0..5.0),
            r.random_range(-0.05..0.05),
            r.random_range(-0.05..0.05),
        ]);
        let flow = m.to_flow(64, 48);
        let fit = estimate_global_affine(&flow).unwrap();
        worst = worst.max(residual_magnitude(&flow, &fit).into_iter().fold(0.0, f64::max));
    }
    let (w, h) = (64, 64);
    let inside = |x: f64, y: f64| (27.0..35.0).contains(&x) && (24.0..32.0).contains(&y);
    let flow = FlowField::from_fn(w, h, |x, y| if inside(x, y) { (3.0, 0.0) } else { (0.0, 0.0) });
    let map = residual_motion(&flow, &estimate_global_affine(&flow).unwrap()).unwrap();
    let (mut min_in, mut max_out) = (f64::INFINITY, 0.0f64);
    for (i, &v) in map.magnitude.iter().enumerate() {
        if inside((i % w) as f64, (i / w) as f64) {
            min_in = min_in.min(v);
        } else {
            max_out = max_out.max(v);
        }
    }
    ensure(
        worst < 1e-6 && min_in >= 0.9 && max_out <= 0.1,
        format!("50 affine fields max residual {worst:.1e}; block min inside {min_in:.3}, max outside {max_out:.3}"),
    )
}

fn criterion_5() -> Outcome {
    const REFERENCE: [f64; 6] = [1.0, 0.96, 0.9216, 0.884736, 0.84934656, 0.8153727];
    let s = schedule_from_max(1.0, 0.04, 5).unwrap();
    let mut oracle = vec![1.0f64];
    for _ in 0..5 {
        let last = *oracle.last().unwrap();
        oracle.push(last * (1.0 - 0.04));
    }
    let exact = max_abs_diff(s.taus(), &oracle);
    // the last reference value is rounded to 7 decimals
    let reference = s.taus().iter().zip(REFERENCE).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let spec = FixtureSpec::default();
    let cfg = sampler();
    let mut checked = 0;
    let mut sound = true;
    for index in 0..6 {
        let video = render_video(&spec, 9, index);
        for (fi, frame) in video.frames.iter().enumerate() {
            let pts = video.points(fi);
            let fs = FrameSample {
                video_id: &video.video_id,
                frame_index: fi,
                features: frame,
                fixations: &pts,
            };
            let records = sample_frame(&fs, &cfg, 11).unwrap();
            if records.is_empty() {
                continue;
            }
            let map = build_wooding_map(&pts, spec.width, spec.height, SIGMA).unwrap();
            let sched = schedule_from_max(map.max_value(), cfg.epsilon, cfg.depth).unwrap();
            for rec in records {
                let v = map.value_at(rec.center.0, rec.center.1).unwrap();
                let (left, top) = patch_origin(rec.center, PATCH, spec.width, spec.height).unwrap();
                sound &= rec.data == frame.crop(left, top, PATCH).unwrap();
                sound &= match (rec.label, rec.tau_level) {
                    (1, Some(j)) => v >= sched.taus()[j] && v >= sched.boundary(),
                    (0, None) => v < sched.boundary(),
                    _ => false,
                };
                checked += 1;
            }
        }
    }
    ensure(
        exact <= 1e-9 && reference <= 5e-8 && sound && checked > 0,
        format!("iterated oracle diff {exact:.1e}, reference list diff {reference:.1e}, {checked} patches sound {sound}"),
    )
}

fn criterion_6(dataset: &Path) -> Outcome {
    let formula = compute_iterations(444731, 256, 100);
    let samples = load_samples(dataset).unwrap();
    let (train, held) = samples.split_at(samples.len() * 4 / 5);
    let model = arch().build_model(4, PATCH).unwrap();
    let cap = 600;
    let base = SolverConfig {
        learning_rate: 0.01,
        batch_size: 16,
        epochs: 20,
        seed: 3,
        validation_interval: 60,
        ..SolverConfig::default()
    };
    let fixed = train_fn(&model, train, held, &SolverConfig {
        strategy: Strategy::FixedChunk,
        max_iterations: cap,
        ..base.clone()
    });
    let per_epoch = train_fn(&model, train, held, &SolverConfig {
        strategy: Strategy::PerEpochFullPass,
        max_iterations: cap / 10,
        ..base
    });
    let ratio = fixed.iterations_run as f64 / per_epoch.iterations_run as f64;
    ensure(
        formula == 173_800 && ratio >= 10.0,
        format!(
            "compute_iterations={formula}; fixed-chunk {} iters (best {:.3}) vs per-epoch {} iters (best {:.3}), ratio {ratio:.1}",
            fixed.iterations_run, fixed.best_accuracy, per_epoch.iterations_run, per_epoch.best_accuracy
        ),
    )
}

fn train_fn(model: &NetworkModel, train_set: &[Sample], held: &[Sample], cfg: &SolverConfig) -> TrainReport {
    train(model, train_set, held, cfg).unwrap().report
}

fn criterion_7(blob: &PipelineRun, blob_time: Duration) -> Outcome {
    let acc = blob.outcome.report.best_accuracy;
    let epochs = PipelineOptions::desk(FixtureKind::BrightBlob, ChannelConfig::K4).solver.epochs;
    let mut accs = BTreeMap::new();
    for ch in [ChannelConfig::K4, ChannelConfig::K3] {
        let dir = tempfile::tempdir().unwrap();
        let run = run_pipeline(dir.path(), &PipelineOptions::desk(FixtureKind::MotionDefined, ch));
        accs.insert(ch.name(), run.outcome.report.best_accuracy);
    }
    let (a4, a3) = (accs["4k"], accs["3k"]);
    ensure(
        acc >= 0.95 && blob_time < Duration::from_secs(600) && a4 >= a3,
        format!(
            "bright blob 4k held-out {acc:.3} in {epochs} epochs, {:.0}s; motion fixture 4k {a4:.3} vs 3k {a3:.3}",
            blob_time.as_secs_f64()
        ),
    )
}

fn criterion_8(blob: &PipelineRun) -> Outcome {
    let aucs: Vec<f64> = blob
        .evaluation
        .results
        .iter()
        .filter(|r| r.metric == AUC_LABEL)
        .flat_map(|r| r.per_frame.iter().copied())
        .collect();
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;

    let mut r = rng(8);
    let mut const_worst: f64 = 0.0;
    for video in &blob.fixture.videos {
        for fi in 1..video.frames.len() {
            let flat = PlaneStack::filled(64, 64, 1, 0.3);
            const_worst = const_worst.max((auc_fixations(&flat, &video.points(fi)).unwrap() - 0.5).abs());
        }
    }
    let mut oracle_worst: f64 = 0.0;
    for _ in 0..200 {
        // coarse levels force ties
        let levels = r.random_range(2..=10) as f64;
        let values: Vec<f64> = (0..64).map(|_| (r.random_range(0.0..levels)).floor() / levels).collect();
        let n = r.random_range(1..=10);
        let fix: Vec<(usize, usize)> = (0..n).map(|_| (r.random_range(0..8), r.random_range(0..8))).collect();
        let map = PlaneStack::from_plane(8, 8, values.clone()).unwrap();
        oracle_worst = oracle_worst.max((auc_fixations(&map, &fix).unwrap() - pair_auc(&values, 8, &fix)).abs());
    }
    ensure(
        mean >= 0.9 && const_worst <= 0.001 && oracle_worst <= 1e-9,
        format!(
            "trained map AUC {mean:.3} over {} frames; constant map |AUC-0.5| {const_worst:.1e}; pair oracle diff {oracle_worst:.1e}",
            aucs.len()
        ),
    )
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let opts = PipelineOptions {
        train_videos: 4,
        test_videos: 2,
        solver: SolverConfig {
            epochs: 3,
            ..PipelineOptions::desk(FixtureKind::BrightBlob, ChannelConfig::K4).solver
        },
        ..PipelineOptions::desk(FixtureKind::BrightBlob, ChannelConfig::K4)
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path(), &opts);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    single.install(|| run_pipeline(b.path(), &opts));
    let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
    let differing: Vec<&String> = ta.keys().filter(|k| ta.get(*k) != tb.get(*k)).collect();
    let kinds = ["fixture", "train_set", "features", "model.snck", "maps", "eval"];
    let covered = kinds.iter().all(|k| ta.keys().any(|p| p.starts_with(k)));
    ensure(
        ta.len() == tb.len() && differing.is_empty() && covered,
        format!("{} artifacts compared across thread counts, {} differ", ta.len(), differing.len()),
    )
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let res = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = t0.elapsed().as_secs_f64();
    match &res {
        Ok(d) => println!("PASS  {name}: {d} [{secs:.1}s]"),
        Err(d) => println!("FAIL  {name}: {d} [{secs:.1}s]"),
    }
    res.is_ok()
}

fn main() {
    let mut ok = true;
    ok &= run("1 gradient oracle", criterion_1);
    ok &= run("2 conv/pool/LRN oracle", criterion_2);
    ok &= run("3 contrast oracle", criterion_3);
    ok &= run("4 residual motion", criterion_4);
    ok &= run("5 threshold schedule", criterion_5);

    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let blob = panic::catch_unwind(AssertUnwindSafe(|| {
        run_pipeline(dir.path(), &PipelineOptions::desk(FixtureKind::BrightBlob, ChannelConfig::K4))
    }));
    let elapsed = t0.elapsed();
    match &blob {
        Ok(run_) => {
            ok &= run("6 iteration budget", || criterion_6(&run_.train_set));
            ok &= run("7 desk-scale learning", || criterion_7(run_, elapsed));
            ok &= run("8 dense map quality", || criterion_8(run_));
        }
        Err(_) => {
            for name in ["6 iteration budget", "7 desk-scale learning", "8 dense map quality"] {
                println!("FAIL  {name}: fixture pipeline failed");
            }
            ok = false;
        }
    }
    ok &= run("9 determinism", criterion_9);
    if !ok {
        std::process::exit(1);
    }
}
