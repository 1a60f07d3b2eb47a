//! The five pipeline stages as library calls over files on disk.
//!
//! Each stage reads only what earlier stages wrote: frames and gaze via a
//! manifest, feature stacks named `<video>_<frame>.fmap`, a patch dataset
//! directory, a checkpoint, and predicted maps named like the features.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channels::{extract_features, ChannelConfig};
use crate::cnn::{train_resumable, NetworkModel, Sample, SolverConfig, TrainOutcome};
use crate::config::{ArchSection, PredictSection};
use crate::error::{Error, Result};
use crate::io::{
    load_checkpoint, load_fixations, load_frame_sequence, read_map_file, read_plane_stack, save_checkpoint,
    write_pgm, write_plane_stack, Checkpoint, DatasetManifest, FixationBounds, FixationLog, ManifestEntry,
};
use crate::metrics::{compare_models, ComparisonReport, FrameMap, ModelMaps};
use crate::plane::PlaneStack;
use crate::saliency::predict_dense_map;
use crate::sampler::{assemble_from_frames, read_patch_dataset, write_patch_dataset, FrameSample, SamplerConfig};

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn frame_file_name(video_id: &str, frame_index: usize, ext: &str) -> String {
    format!("{video_id}_{frame_index:04}.{ext}")
}

/// Per-frame files `<video>_<index>.<ext>` for one video, in frame order.
pub fn list_frame_files(dir: &Path, video_id: &str) -> Result<Vec<(usize, PathBuf)>> {
    let prefix = format!("{video_id}_");
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        if !matches!(ext, "fmap" | "pgm") {
            continue;
        }
        if let Some(idx) = stem.strip_prefix(&prefix).and_then(|r| r.parse::<usize>().ok()) {
            out.push((idx, path));
        }
    }
    out.sort();
    out.dedup_by_key(|(i, _)| *i);
    Ok(out)
}

fn check_entry_dims(entry: &ManifestEntry, width: usize, height: usize) -> Result<()> {
    if entry.width != width || entry.height != height {
        return Err(Error::Shape(format!(
            "video {} has {width}×{height} frames, manifest says {}×{}",
            entry.video_id, entry.width, entry.height
        )));
    }
    Ok(())
}

/// Writes one feature stack per frame; returns the written paths in order.
pub fn cmd_extract(manifest: &DatasetManifest, channels: ChannelConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    for entry in &manifest.entries {
        let seq = load_frame_sequence(&entry.frame_dir)?;
        check_entry_dims(entry, seq.width, seq.height)?;
        let features = extract_features(channels, &seq.frames)?;
        let paths: Vec<PathBuf> = features
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let p = out_dir.join(frame_file_name(&entry.video_id, i, "fmap"));
                write_plane_stack(f, &p)?;
                Ok(p)
            })
            .collect::<Result<_>>()?;
        written.extend(paths);
    }
    Ok(written)
}

/// Feature stacks of every manifest video, keyed by frame.
fn load_video_features(entry: &ManifestEntry, features_dir: &Path) -> Result<Vec<(usize, PlaneStack)>> {
    let files = list_frame_files(features_dir, &entry.video_id)?;
    if files.is_empty() {
        return Err(Error::NoFrames(features_dir.join(format!("{}_*", entry.video_id))));
    }
    files
        .par_iter()
        .map(|(i, p)| {
            let s = read_plane_stack(p)?;
            check_entry_dims(entry, s.width(), s.height())?;
            Ok((*i, s))
        })
        .collect()
}

fn load_entry_fixations(entry: &ManifestEntry, frame_count: Option<usize>) -> Result<FixationLog> {
    let mut log = load_fixations(
        &entry.fixation_file,
        FixationBounds {
            width: entry.width,
            height: entry.height,
            frame_count,
        },
    )?;
    log.records.retain(|r| r.video_id == entry.video_id);
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleSummary {
    pub patches: usize,
    pub salient: usize,
}

/// Video id, frame index, feature stack and gaze points of one frame.
type FrameFeatures = (String, usize, PlaneStack, Vec<(usize, usize)>);

/// Samples labelled patches from every frame and writes a patch dataset.
pub fn cmd_sample(
    manifest: &DatasetManifest,
    features_dir: &Path,
    config: &SamplerConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<SampleSummary> {
    let mut features: Vec<FrameFeatures> = Vec::new();
    for entry in &manifest.entries {
        if config.patch_size > entry.width || config.patch_size > entry.height {
            return Err(Error::InvalidArgument(format!(
                "patch size {} exceeds {}×{} frames of {}",
                config.patch_size, entry.width, entry.height, entry.video_id
            )));
        }
        let frames = load_video_features(entry, features_dir)?;
        let count = frames.last().map(|(i, _)| i + 1);
        let log = load_entry_fixations(entry, count)?;
        for (i, stack) in frames {
            let pts = log.points_for(&entry.video_id, i);
            features.push((entry.video_id.clone(), i, stack, pts));
        }
    }
    let samples: Vec<FrameSample<'_>> = features
        .iter()
        .map(|(v, i, s, p)| FrameSample {
            video_id: v,
            frame_index: *i,
            features: s,
            fixations: p,
        })
        .collect();
    let records = assemble_from_frames(&samples, config, seed)?;
    if records.is_empty() {
        return Err(Error::Degenerate("no patches could be sampled".into()));
    }
    write_patch_dataset(out_dir, &records)?;
    Ok(SampleSummary {
        patches: records.len(),
        salient: records.iter().filter(|r| r.label == 1).count(),
    })
}

/// Loads a patch dataset as training samples in stored order.
pub fn load_samples(dir: &Path) -> Result<Vec<Sample>> {
    Ok(read_patch_dataset(dir)?.iter().map(Sample::from).collect())
}

/// Splits off a seeded `fraction` of samples for validation.
pub fn holdout_split(samples: Vec<Sample>, fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("hold-out fraction {fraction} outside (0,1)")));
    }
    let n_hold = ((samples.len() as f64 * fraction).round() as usize).clamp(1, samples.len().saturating_sub(1));
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples to hold some out".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5A17));
    let held: std::collections::BTreeSet<usize> = order[..n_hold].iter().copied().collect();
    let (mut train, mut hold) = (Vec::new(), Vec::new());
    for (i, s) in samples.into_iter().enumerate() {
        if held.contains(&i) {
            hold.push(s);
        } else {
            train.push(s);
        }
    }
    Ok((train, hold))
}

/// Where the held-out samples come from.
#[derive(Debug, Clone, PartialEq)]
pub enum HeldOut {
    Dataset(PathBuf),
    Fraction(f64),
}

#[derive(Debug, Clone)]
pub struct TrainRequest<'a> {
    pub dataset: &'a Path,
    pub held_out: HeldOut,
    pub arch: &'a ArchSection,
    pub solver: &'a SolverConfig,
    pub channels: ChannelConfig,
    pub out_model: &'a Path,
    /// CSV of `iteration,accuracy`; defaults to `<out_model>.csv`.
    pub report: Option<&'a Path>,
    pub resume: Option<&'a Path>,
    pub halt_at: Option<u64>,
}

pub fn report_path_for(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".csv");
    PathBuf::from(s)
}

/// Trains a patch classifier and writes the best checkpoint (with the
/// state needed to resume) and the accuracy report.
pub fn cmd_train(req: &TrainRequest<'_>) -> Result<TrainOutcome> {
    let all = load_samples(req.dataset)?;
    let Some(first) = all.first() else {
        return Err(Error::Degenerate("patch dataset is empty".into()));
    };
    let shape = first.input.shape();
    if shape.height != shape.width {
        return Err(Error::Shape(format!("patches must be square, got {shape}")));
    }
    if shape.channels != req.channels.channel_count() {
        return Err(Error::Shape(format!(
            "dataset has {} channels but configuration {} needs {}",
            shape.channels,
            req.channels,
            req.channels.channel_count()
        )));
    }
    let (train_set, held) = match &req.held_out {
        HeldOut::Dataset(dir) => (all, load_samples(dir)?),
        HeldOut::Fraction(f) => holdout_split(all, *f, req.solver.seed)?,
    };
    if let Some(s) = train_set.iter().chain(&held).find(|s| s.input.shape() != shape) {
        return Err(Error::Shape(format!("mixed patch shapes: {} vs {shape}", s.input.shape())));
    }

    let (model, state) = match req.resume {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            let state = ck
                .state
                .ok_or_else(|| Error::InvalidArgument(format!("{} has no solver state to resume", p.display())))?;
            (ck.model, Some(state))
        }
        None => (req.arch.build_model(shape.channels, shape.width)?, None),
    };
    let outcome = train_resumable(&model, state, &train_set, &held, req.solver, req.halt_at)?;
    let ck = Checkpoint {
        model: outcome.best.clone(),
        metadata: format!("channels={};patch_size={}", req.channels, shape.width),
        state: Some(outcome.state.clone()),
    };
    if let Some(dir) = req.out_model.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_checkpoint(&ck, req.out_model)?;
    let report = req.report.map_or_else(|| report_path_for(req.out_model), Path::to_path_buf);
    fs::write(&report, outcome.report.to_csv()).map_err(|e| Error::io(&report, e))?;
    Ok(outcome)
}

/// Predicts a dense map for every feature stack of every manifest video.
pub fn cmd_predict(
    model_path: &Path,
    manifest: &DatasetManifest,
    features_dir: &Path,
    predict: &PredictSection,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    let model: NetworkModel = load_checkpoint(model_path)?.model;
    let input = model.input_shape();
    let t = predict.patch_size.unwrap_or(input.width);
    if t != input.width || t != input.height {
        return Err(Error::Shape(format!("model input is {input}, prediction patch size is {t}")));
    }
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    for entry in &manifest.entries {
        let files = list_frame_files(features_dir, &entry.video_id)?;
        if files.is_empty() {
            return Err(Error::NoFrames(features_dir.join(format!("{}_*", entry.video_id))));
        }
        let paths: Vec<PathBuf> = files
            .par_iter()
            .map(|(i, p)| {
                let features = read_plane_stack(p)?;
                let map = predict_dense_map(&model, &features, t)?.to_plane_stack();
                let out = out_dir.join(frame_file_name(&entry.video_id, *i, "fmap"));
                write_plane_stack(&map, &out)?;
                if predict.write_pgm {
                    write_pgm(&map, &out.with_extension("pgm"))?;
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        written.extend(paths);
    }
    Ok(written)
}

/// Scores every named map directory against the manifest's gaze and writes
/// the CSV report plus a text table next to it (`.txt`).
pub fn cmd_evaluate(map_dirs: &[(String, PathBuf)], manifest: &DatasetManifest, out_report: &Path) -> Result<ComparisonReport> {
    if map_dirs.is_empty() {
        return Err(Error::InvalidArgument("no map directories given".into()));
    }
    let mut log = FixationLog::default();
    let mut models: Vec<ModelMaps> = map_dirs
        .iter()
        .map(|(name, _)| ModelMaps {
            name: name.clone(),
            frames: Vec::new(),
        })
        .collect();
    for entry in &manifest.entries {
        let mut per_model: Vec<BTreeMap<usize, PathBuf>> = Vec::new();
        for (name, dir) in map_dirs {
            let files: BTreeMap<usize, PathBuf> = list_frame_files(dir, &entry.video_id)?.into_iter().collect();
            if files.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "model {name:?} has no maps for video {}",
                    entry.video_id
                )));
            }
            per_model.push(files);
        }
        let keys: Vec<usize> = per_model[0].keys().copied().collect();
        for (m, files) in per_model.iter().enumerate() {
            if files.keys().copied().collect::<Vec<_>>() != keys {
                return Err(Error::InvalidArgument(format!(
                    "maps of {:?} and {:?} are misaligned for video {}",
                    map_dirs[0].0, map_dirs[m].0, entry.video_id
                )));
            }
        }
        log.records
            .extend(load_entry_fixations(entry, None)?.records);
        for (m, files) in per_model.iter().enumerate() {
            let maps: Vec<FrameMap> = files
                .par_iter()
                .map(|(&i, p)| {
                    let map = read_map_file(p)?;
                    check_entry_dims(entry, map.width(), map.height())?;
                    Ok(FrameMap {
                        video_id: entry.video_id.clone(),
                        frame_index: i,
                        map,
                    })
                })
                .collect::<Result<_>>()?;
            models[m].frames.extend(maps);
        }
    }
    let report = compare_models(&models, &log)?;
    if let Some(dir) = out_report.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    fs::write(out_report, report.to_csv()).map_err(|e| Error::io(out_report, e))?;
    let table = out_report.with_extension("txt");
    fs::write(&table, report.to_table()).map_err(|e| Error::io(&table, e))?;
    Ok(report)
}
