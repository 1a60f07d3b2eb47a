#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salnet_core::channels::ChannelConfig;
use salnet_core::cnn::{ArchPreset, ConvGeometry, Init, LrnParams, SolverConfig, TrainOutcome, Volume};
use salnet_core::config::{ArchSection, PredictSection};
use salnet_core::contrast::HsiImage;
use salnet_core::io::load_manifest;
use salnet_core::pipeline::{cmd_evaluate, cmd_extract, cmd_predict, cmd_sample, cmd_train, HeldOut, TrainRequest};
use salnet_core::sampler::SamplerConfig;
use salnet_core::synthetic::{write_fixture, FixtureKind, FixturePaths, FixtureSpec};
use salnet_core::metrics::ComparisonReport;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn random_volume(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Volume {
    Volume::from_vec(c, h, w, uniform(rng, c * h * w, -1.0, 1.0)).unwrap()
}

/// Relative error with a floor on the magnitude.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn naive_conv(x: &Volume, w: &[f64], b: &[f64], g: &ConvGeometry) -> Volume {
    let oh = (x.height - g.kernel_h) / g.stride + 1;
    let ow = (x.width - g.kernel_w) / g.stride + 1;
    let mut out = Volume::zeros(g.out_channels, oh, ow);
    for o in 0..g.out_channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[o];
                for c in 0..g.in_channels {
                    for ky in 0..g.kernel_h {
                        for kx in 0..g.kernel_w {
                            let wi = ((o * g.in_channels + c) * g.kernel_h + ky) * g.kernel_w + kx;
                            acc += w[wi] * x.at(c, oy * g.stride + ky, ox * g.stride + kx);
                        }
                    }
                }
                out.data[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Ceil-mode pooled extent, dropping a window that would start past the input.
pub fn naive_pool_dim(n: usize, k: usize, s: usize) -> usize {
    let mut out = ((n - k) as f64 / s as f64).ceil() as usize + 1;
    if (out - 1) * s >= n {
        out -= 1;
    }
    out
}

pub fn naive_pool(x: &Volume, k: usize, s: usize) -> Volume {
    let (oh, ow) = (naive_pool_dim(x.height, k, s), naive_pool_dim(x.width, k, s));
    let mut out = Volume::zeros(x.channels, oh, ow);
    for c in 0..x.channels {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for y in oy * s..(oy * s + k).min(x.height) {
                    for xx in ox * s..(ox * s + k).min(x.width) {
                        m = m.max(x.at(c, y, xx));
                    }
                }
                out.data[(c * oh + oy) * ow + ox] = m;
            }
        }
    }
    out
}

pub fn naive_lrn(x: &Volume, p: &LrnParams) -> Volume {
    let half = (p.size / 2) as isize;
    let mut out = Volume::zeros(x.channels, x.height, x.width);
    for c in 0..x.channels {
        for y in 0..x.height as isize {
            for xx in 0..x.width as isize {
                let mut sum = 0.0;
                for dy in -half..=half {
                    for dx in -half..=half {
                        let (yy, xq) = (y + dy, xx + dx);
                        if yy >= 0 && xq >= 0 && yy < x.height as isize && xq < x.width as isize {
                            let v = x.at(c, yy as usize, xq as usize);
                            sum += v * v;
                        }
                    }
                }
                let u = x.at(c, y as usize, xx as usize);
                let denom = (1.0 + p.alpha / (p.size * p.size) as f64 * sum).powf(p.beta);
                out.data[(c * x.height + y as usize) * x.width + xx as usize] = u / denom;
            }
        }
    }
    out
}

/// Per-pixel descriptors evaluated directly from their defining sums over
/// the in-frame 8-neighbours, averaged by the neighbour count.
pub fn brute_contrast(hsi: &HsiImage) -> Vec<[f64; 7]> {
    const KMIN: f64 = 0.21;
    let (w, h) = (hsi.width as isize, hsi.height as isize);
    let f = |own: f64, other: f64| (own + other) / 2.0 * (KMIN + (1.0 - KMIN) * own);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            let mut xs = [0.0; 5];
            let mut n = 0.0;
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    let base = f(hsi.sat[i], hsi.sat[j]) * f(hsi.int[i], hsi.int[j]);
                    let mu = (hsi.hue[i] - hsi.hue[j]).abs();
                    let dh = if mu <= 0.5 { mu } else { 1.0 - mu };
                    xs[0] += base;
                    xs[1] += base * dh;
                    if hsi.hue[i] < 0.5 && hsi.hue[j] >= 0.5 {
                        xs[2] += base * dh;
                    }
                    xs[3] += base * (hsi.sat[i] - hsi.sat[j]).abs();
                    xs[4] += base * (hsi.int[i] - hsi.int[j]).abs();
                    n += 1.0;
                }
            }
            let v7 = hsi.sat[i] * hsi.int[i];
            let v6 = if hsi.hue[i] >= 0.0 && hsi.hue[i] < 0.125 { v7 } else { 0.0 };
            out.push([xs[0] / n, xs[1] / n, xs[2] / n, xs[3] / n, xs[4] / n, v6, v7]);
        }
    }
    out
}

/// Exhaustive positive/negative pair count: P(pos > neg) + P(pos = neg)/2.
pub fn pair_auc(values: &[f64], width: usize, fixations: &[(usize, usize)]) -> f64 {
    let pos: BTreeSet<usize> = fixations.iter().map(|&(x, y)| y * width + x).collect();
    let (mut score, mut pairs) = (0.0, 0.0);
    for &p in &pos {
        for (n, &vn) in values.iter().enumerate() {
            if pos.contains(&n) {
                continue;
            }
            pairs += 1.0;
            if values[p] > vn {
                score += 1.0;
            } else if values[p] == vn {
                score += 0.5;
            }
        }
    }
    score / pairs
}

/// Artifacts of one synth → extract → sample → train → predict → evaluate run.
pub struct PipelineRun {
    pub fixture: FixturePaths,
    pub features: PathBuf,
    pub train_set: PathBuf,
    pub test_set: PathBuf,
    pub model: PathBuf,
    pub maps: PathBuf,
    pub report: PathBuf,
    pub outcome: TrainOutcome,
    pub evaluation: ComparisonReport,
}

pub struct PipelineOptions {
    pub kind: FixtureKind,
    pub channels: ChannelConfig,
    pub train_videos: usize,
    pub test_videos: usize,
    pub solver: SolverConfig,
}

impl PipelineOptions {
    pub fn desk(kind: FixtureKind, channels: ChannelConfig) -> Self {
        PipelineOptions {
            kind,
            channels,
            train_videos: 8,
            test_videos: 4,
            solver: SolverConfig {
                learning_rate: 0.01,
                batch_size: 16,
                epochs: 20,
                seed: 3,
                ..SolverConfig::default()
            },
        }
    }
}

pub const PATCH: usize = 20;
pub const SIGMA: f64 = 20.0;

pub fn sampler() -> SamplerConfig {
    SamplerConfig {
        patch_size: PATCH,
        sigma_px: Some(SIGMA),
        ..SamplerConfig::default()
    }
}

pub fn arch() -> ArchSection {
    ArchSection {
        preset: ArchPreset::Compact,
        init: Init::Msra,
        ..ArchSection::default()
    }
}

pub fn run_pipeline(root: &Path, opts: &PipelineOptions) -> PipelineRun {
    let spec = FixtureSpec {
        kind: opts.kind,
        ..FixtureSpec::default()
    };
    let fixture = write_fixture(&root.join("fixture"), &spec, 42, opts.train_videos, opts.test_videos).unwrap();
    let train_m = load_manifest(&fixture.train_manifest).unwrap();
    let test_m = load_manifest(&fixture.test_manifest).unwrap();
    let features = root.join("features");
    cmd_extract(&train_m, opts.channels, &features).unwrap();
    cmd_extract(&test_m, opts.channels, &features).unwrap();
    let (train_set, test_set) = (root.join("train_set"), root.join("test_set"));
    cmd_sample(&train_m, &features, &sampler(), 1, &train_set).unwrap();
    cmd_sample(&test_m, &features, &sampler(), 2, &test_set).unwrap();
    let model = root.join("model.snck");
    let outcome = cmd_train(&TrainRequest {
        dataset: &train_set,
        held_out: HeldOut::Dataset(test_set.clone()),
        arch: &arch(),
        solver: &opts.solver,
        channels: opts.channels,
        out_model: &model,
        report: None,
        resume: None,
        halt_at: None,
    })
    .unwrap();
    let maps = root.join("maps");
    cmd_predict(&model, &test_m, &features, &PredictSection::default(), &maps).unwrap();
    let report = root.join("eval").join("report.csv");
    let evaluation = cmd_evaluate(&[("net".to_string(), maps.clone())], &test_m, &report).unwrap();
    PipelineRun {
        fixture,
        features,
        train_set,
        test_set,
        model,
        maps,
        report,
        outcome,
        evaluation,
    }
}
