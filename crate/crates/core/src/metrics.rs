//! Agreement between predicted maps and recorded gaze.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixation_map::{build_wooding_map, default_sigma};
use crate::io::FixationLog;
use crate::plane::PlaneStack;

/// Label used for the fixated-pixel AUC in reports.
pub const AUC_LABEL: &str = "AUC-fix";
pub const NSS_LABEL: &str = "NSS";
pub const PCC_LABEL: &str = "PCC";

fn single_channel(map: &PlaneStack) -> Result<&[f64]> {
    if map.channels() != 1 {
        return Err(Error::Shape(format!("expected a 1-channel map, got {} channels", map.channels())));
    }
    Ok(map.data())
}

fn check_points(map: &PlaneStack, fixations: &[(usize, usize)]) -> Result<()> {
    if fixations.is_empty() {
        return Err(Error::Degenerate("no fixations".into()));
    }
    if let Some(p) = fixations.iter().find(|p| p.0 >= map.width() || p.1 >= map.height()) {
        return Err(Error::InvalidArgument(format!(
            "fixation {p:?} outside {}×{} map",
            map.width(),
            map.height()
        )));
    }
    Ok(())
}

/// Area under the ROC curve with fixated pixels as positives and every
/// other pixel as a negative, swept over unique map values. Ties between a
/// positive and a negative count one half.
pub fn auc_fixations(map: &PlaneStack, fixations: &[(usize, usize)]) -> Result<f64> {
    let values = single_channel(map)?;
    check_points(map, fixations)?;
    let w = map.width();
    let fixated: BTreeSet<usize> = fixations.iter().map(|&(x, y)| y * w + x).collect();
    let positives = fixated.len() as u64;
    let negatives = values.len() as u64 - positives;
    if negatives == 0 {
        return Err(Error::Degenerate("every pixel is fixated".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));

    // Trapezoids between successive thresholds, kept in integers (twice the area).
    let (mut tp, mut fp, mut area2) = (0u64, 0u64, 0u128);
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && values[order[i]] == v {
            if fixated.contains(&order[i]) {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += ((fp - fp0) as u128) * ((tp + tp0) as u128);
    }
    Ok(area2 as f64 / (2.0 * positives as f64 * negatives as f64))
}

/// Mean standardized map value over the fixations (population σ).
pub fn nss(map: &PlaneStack, fixations: &[(usize, usize)]) -> Result<f64> {
    let values = single_channel(map)?;
    check_points(map, fixations)?;
    let (mean, std) = mean_std(values);
    if !(std > 0.0) {
        return Err(Error::Degenerate("NSS undefined for a constant map".into()));
    }
    let w = map.width();
    let sum: f64 = fixations.iter().map(|&(x, y)| (values[y * w + x] - mean) / std).sum();
    Ok(sum / fixations.len() as f64)
}

/// Pearson correlation over pixels.
pub fn pcc(a: &PlaneStack, b: &PlaneStack) -> Result<f64> {
    let (va, vb) = (single_channel(a)?, single_channel(b)?);
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "maps differ in size: {}×{} vs {}×{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (ma, sa) = mean_std(va);
    let (mb, sb) = mean_std(vb);
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::Degenerate("PCC undefined for a constant map".into()));
    }
    let cov = va.iter().zip(vb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / va.len() as f64;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One metric aggregated over the evaluated frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub video_id: String,
    pub model: String,
    pub metric: String,
    pub per_frame: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Frames where the metric was undefined (no fixations, flat map).
    pub skipped: usize,
}

impl EvalResult {
    fn new(video_id: &str, model: &str, metric: &str, per_frame: Vec<f64>, skipped: usize) -> Self {
        let (mean, std) = mean_std(&per_frame);
        EvalResult {
            video_id: video_id.to_string(),
            model: model.to_string(),
            metric: metric.to_string(),
            per_frame,
            mean,
            std,
            skipped,
        }
    }

    pub fn frames(&self) -> usize {
        self.per_frame.len()
    }
}

/// A predicted map for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMap {
    pub video_id: String,
    pub frame_index: usize,
    pub map: PlaneStack,
}

/// All maps produced by one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMaps {
    pub name: String,
    pub frames: Vec<FrameMap>,
}

/// Mean per-frame AUC difference `model_a − model_b` on one video.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDelta {
    pub video_id: String,
    pub model_a: String,
    pub model_b: String,
    pub mean: f64,
    pub std: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub results: Vec<EvalResult>,
    pub deltas: Vec<PairDelta>,
}

impl ComparisonReport {
    /// CSV with header `video_id,model,metric,mean,std,frames`; pairwise
    /// rows use model `a-vs-b` and metric `delta-AUC-fix`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("video_id,model,metric,mean,std,frames\n");
        for r in &self.results {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.video_id, r.model, r.metric, r.mean, r.std, r.frames());
        }
        for d in &self.deltas {
            let _ = writeln!(
                out,
                "{},{}-vs-{},delta-{},{},{},{}",
                d.video_id, d.model_a, d.model_b, AUC_LABEL, d.mean, d.std, d.frames
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:<20} {:<8} {:>18} {:>7} {:>8}",
            "video", "model", "metric", "mean ± std", "frames", "skipped"
        );
        for r in &self.results {
            let _ = writeln!(
                out,
                "{:<16} {:<20} {:<8} {:>8.5} ± {:<7.5} {:>7} {:>8}",
                r.video_id,
                r.model,
                r.metric,
                r.mean,
                r.std,
                r.frames(),
                r.skipped
            );
        }
        if !self.deltas.is_empty() {
            let _ = writeln!(out, "\nmean {AUC_LABEL} improvement");
            for d in &self.deltas {
                let _ = writeln!(
                    out,
                    "{:<16} {:<20} {:>8.5} ± {:<7.5} {:>7}",
                    d.video_id,
                    format!("{} - {}", d.model_a, d.model_b),
                    d.mean,
                    d.std,
                    d.frames
                );
            }
        }
        out
    }
}

type FrameScores = (Option<f64>, Option<f64>, Option<f64>);

fn score_frame(map: &PlaneStack, fixations: &[(usize, usize)]) -> Result<FrameScores> {
    if fixations.is_empty() {
        return Ok((None, None, None));
    }
    let auc = match auc_fixations(map, fixations) {
        Ok(v) => Some(v),
        Err(Error::Degenerate(_)) => None,
        Err(e) => return Err(e),
    };
    let nss = nss(map, fixations).ok();
    let density = build_wooding_map(fixations, map.width(), map.height(), default_sigma(map.width()))?;
    let pcc = pcc(map, &density.to_plane_stack()).ok();
    Ok((auc, nss, pcc))
}

/// Per-video AUC, NSS and PCC for every model, plus pairwise AUC deltas.
///
/// All models must cover the same `(video, frame)` list in the same order.
pub fn compare_models(models: &[ModelMaps], fixations: &FixationLog) -> Result<ComparisonReport> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models to compare".into()));
    }
    let keys: Vec<(&str, usize)> = models[0]
        .frames
        .iter()
        .map(|f| (f.video_id.as_str(), f.frame_index))
        .collect();
    for m in &models[1..] {
        let other: Vec<(&str, usize)> = m.frames.iter().map(|f| (f.video_id.as_str(), f.frame_index)).collect();
        if other != keys {
            return Err(Error::InvalidArgument(format!(
                "model {:?} covers different frames than {:?}",
                m.name, models[0].name
            )));
        }
    }
    let points: Vec<Vec<(usize, usize)>> = keys.iter().map(|&(v, f)| fixations.points_for(v, f)).collect();

    // scores[model][frame]
    let scores: Vec<Vec<FrameScores>> = models
        .iter()
        .map(|m| {
            m.frames
                .par_iter()
                .zip(&points)
                .map(|(f, p)| score_frame(&f.map, p))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut videos: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, &(v, _)) in keys.iter().enumerate() {
        videos.entry(v).or_default().push(i);
    }

    let mut report = ComparisonReport::default();
    for (&video, frames) in &videos {
        for (m, s) in models.iter().zip(&scores) {
            let pick = |sel: fn(&FrameScores) -> Option<f64>| {
                let vals: Vec<f64> = frames.iter().filter_map(|&i| sel(&s[i])).collect();
                let skipped = frames.len() - vals.len();
                (vals, skipped)
            };
            for (label, sel) in [
                (AUC_LABEL, (|s: &FrameScores| s.0) as fn(&FrameScores) -> Option<f64>),
                (NSS_LABEL, |s: &FrameScores| s.1),
                (PCC_LABEL, |s: &FrameScores| s.2),
            ] {
                let (vals, skipped) = pick(sel);
                report.results.push(EvalResult::new(video, &m.name, label, vals, skipped));
            }
        }
        for a in 0..models.len() {
            for b in a + 1..models.len() {
                let diffs: Vec<f64> = frames
                    .iter()
                    .filter_map(|&i| Some(scores[a][i].0? - scores[b][i].0?))
                    .collect();
                let (mean, std) = mean_std(&diffs);
                report.deltas.push(PairDelta {
                    video_id: video.to_string(),
                    model_a: models[a].name.clone(),
                    model_b: models[b].name.clone(),
                    mean,
                    std,
                    frames: diffs.len(),
                });
            }
        }
    }
    Ok(report)
}
