//! Labelled patch extraction driven by a relaxed-threshold schedule over
//! the fixation map.
//!
//! Salient patches are centred on local maxima of the map, admitted level
//! by level as the threshold relaxes from the map maximum. Non-salient
//! patches are drawn uniformly among centres whose map value stays below
//! the most relaxed threshold.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixation_map::{self, FixationMap};
use crate::io::{read_plane_stack, write_plane_stack};
use crate::plane::PlaneStack;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSchedule {
    taus: Vec<f64>,
    epsilon: f64,
}

impl ThresholdSchedule {
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Relaxation depth J; the schedule holds J+1 thresholds.
    pub fn depth(&self) -> usize {
        self.taus.len() - 1
    }

    /// The most relaxed threshold, τ_J: the salient / non-salient boundary.
    pub fn boundary(&self) -> f64 {
        *self.taus.last().unwrap()
    }

    /// Binary label of a patch whose centre has map value `w`.
    pub fn label(&self, w: f64) -> u8 {
        u8::from(w >= self.boundary())
    }
}

pub fn build_threshold_schedule(
    map: &FixationMap,
    epsilon: f64,
    depth: usize,
) -> Result<ThresholdSchedule> {
    schedule_from_max(map.max_value(), epsilon, depth)
}

pub fn schedule_from_max(max: f64, epsilon: f64, depth: usize) -> Result<ThresholdSchedule> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relaxation epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if !(max > 0.0) {
        return Err(Error::InvalidArgument("empty fixation map".into()));
    }
    let mut taus = Vec::with_capacity(depth + 1);
    taus.push(max);
    for j in 0..depth {
        let t = taus[j];
        taus.push(t - epsilon * t);
    }
    Ok(ThresholdSchedule { taus, epsilon })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub data: PlaneStack,
    pub center: (usize, usize),
    pub label: u8,
    pub video_id: String,
    pub frame_index: usize,
    /// Threshold level at which a salient patch was admitted.
    pub tau_level: Option<usize>,
}

/// Identifies the frame a patch comes from.
#[derive(Debug, Clone, Copy)]
pub struct FrameRef<'a> {
    pub video_id: &'a str,
    pub frame_index: usize,
}

/// Top-left corner of the `t`×`t` patch centred at `center`, if it fits.
pub fn patch_origin(center: (usize, usize), t: usize, width: usize, height: usize) -> Option<(usize, usize)> {
    let half = t / 2;
    let (x, y) = center;
    if x < half || y < half {
        return None;
    }
    let (left, top) = (x - half, y - half);
    (left + t <= width && top + t <= height).then_some((left, top))
}

fn check_frame(stack: &PlaneStack, map: &FixationMap, t: usize) -> Result<()> {
    if stack.width() != map.width() || stack.height() != map.height() {
        return Err(Error::Shape(format!(
            "features {}x{} vs map {}x{}",
            stack.width(),
            stack.height(),
            map.width(),
            map.height()
        )));
    }
    if t == 0 || t > stack.width().min(stack.height()) {
        return Err(Error::InvalidArgument(format!(
            "patch size {t} does not fit a {}x{} frame",
            stack.width(),
            stack.height()
        )));
    }
    Ok(())
}

/// Pixels of value > 0 that are ≥ all of their 8-neighbours.
fn local_maxima(map: &FixationMap) -> Vec<(usize, usize)> {
    let (w, h) = (map.width(), map.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.at(x, y);
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if (nx, ny) != (x, y) && map.at(nx, ny) > v {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((x, y));
            }
        }
    }
    out
}

/// Whether two equal-size patches overlap by more than half along an axis.
fn overlaps_too_much(a: (usize, usize), b: (usize, usize), t: usize) -> bool {
    let dx = a.0.abs_diff(b.0);
    let dy = a.1.abs_diff(b.1);
    let intersect = dx < t && dy < t;
    // overlap along an axis is t - d; "more than half" means d < t/2
    intersect && (2 * dx < t || 2 * dy < t)
}

pub fn extract_salient_patches(
    stack: &PlaneStack,
    map: &FixationMap,
    schedule: &ThresholdSchedule,
    t: usize,
    max_per_frame: usize,
    frame: FrameRef<'_>,
) -> Result<Vec<PatchRecord>> {
    check_frame(stack, map, t)?;
    let mut remaining = local_maxima(map);
    // strongest first; ties broken by the lexicographically smaller centre
    remaining.sort_by(|a, b| {
        map.at(b.0, b.1)
            .partial_cmp(&map.at(a.0, a.1))
            .unwrap()
            .then(a.cmp(b))
    });

    let mut accepted: Vec<PatchRecord> = Vec::new();
    for (level, &tau) in schedule.taus().iter().enumerate() {
        let split = remaining.partition_point(|&(x, y)| map.at(x, y) >= tau);
        for center in remaining.drain(..split) {
            if accepted.len() >= max_per_frame {
                return Ok(accepted);
            }
            let Some((left, top)) = patch_origin(center, t, stack.width(), stack.height()) else {
                continue;
            };
            if accepted.iter().any(|p| overlaps_too_much(p.center, center, t)) {
                continue;
            }
            accepted.push(PatchRecord {
                data: stack.crop(left, top, t)?,
                center,
                label: 1,
                video_id: frame.video_id.to_string(),
                frame_index: frame.frame_index,
                tau_level: Some(level),
            });
        }
    }
    Ok(accepted)
}

#[derive(Debug, Clone)]
pub struct NonSalientDraw {
    pub patches: Vec<PatchRecord>,
    /// Fewer admissible centres existed than were requested.
    pub exhausted: bool,
}

pub fn extract_nonsalient_patches(
    stack: &PlaneStack,
    map: &FixationMap,
    schedule: &ThresholdSchedule,
    t: usize,
    count: usize,
    seed: u64,
    frame: FrameRef<'_>,
) -> Result<NonSalientDraw> {
    check_frame(stack, map, t)?;
    let boundary = schedule.boundary();
    let (w, h) = (stack.width(), stack.height());
    let half = t / 2;
    let mut admissible = Vec::new();
    for y in half..=h - (t - half) {
        for x in half..=w - (t - half) {
            if map.at(x, y) < boundary {
                admissible.push((x, y));
            }
        }
    }
    let take = count.min(admissible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = index::sample(&mut rng, admissible.len(), take);
    let mut patches = Vec::with_capacity(take);
    for i in chosen.iter() {
        let center = admissible[i];
        let (left, top) = patch_origin(center, t, w, h).expect("admissible centres fit");
        patches.push(PatchRecord {
            data: stack.crop(left, top, t)?,
            center,
            label: 0,
            video_id: frame.video_id.to_string(),
            frame_index: frame.frame_index,
            tau_level: None,
        });
    }
    Ok(NonSalientDraw {
        patches,
        exhausted: take < count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub patch_size: usize,
    pub epsilon: f64,
    pub depth: usize,
    pub max_salient_per_frame: usize,
    pub nonsalient_per_frame: usize,
    /// Wooding spread; `None` uses 2% of the frame width.
    pub sigma_px: Option<f64>,
    pub balance: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            patch_size: 100,
            epsilon: 0.04,
            depth: 5,
            max_salient_per_frame: 8,
            nonsalient_per_frame: 8,
            sigma_px: None,
            balance: true,
        }
    }
}

/// One frame's features together with its gaze points.
#[derive(Debug, Clone)]
pub struct FrameSample<'a> {
    pub video_id: &'a str,
    pub frame_index: usize,
    pub features: &'a PlaneStack,
    pub fixations: &'a [(usize, usize)],
}

/// Deterministic per-frame seed derived from the run seed and frame identity.
pub fn frame_seed(seed: u64, video_id: &str, frame_index: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in video_id.bytes().chain((frame_index as u64).to_le_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Salient and non-salient patches of one frame. Frames without fixations
/// yield nothing.
pub fn sample_frame(frame: &FrameSample<'_>, config: &SamplerConfig, seed: u64) -> Result<Vec<PatchRecord>> {
    if frame.fixations.is_empty() {
        return Ok(Vec::new());
    }
    let (w, h) = (frame.features.width(), frame.features.height());
    let sigma = config.sigma_px.unwrap_or_else(|| fixation_map::default_sigma(w));
    let map = fixation_map::build_wooding_map(frame.fixations, w, h, sigma)?;
    let schedule = build_threshold_schedule(&map, config.epsilon, config.depth)?;
    let fref = FrameRef {
        video_id: frame.video_id,
        frame_index: frame.frame_index,
    };
    let mut out = extract_salient_patches(
        frame.features,
        &map,
        &schedule,
        config.patch_size,
        config.max_salient_per_frame,
        fref,
    )?;
    let draw = extract_nonsalient_patches(
        frame.features,
        &map,
        &schedule,
        config.patch_size,
        config.nonsalient_per_frame,
        frame_seed(seed, frame.video_id, frame.frame_index),
        fref,
    )?;
    out.extend(draw.patches);
    Ok(out)
}

fn record_key(r: &PatchRecord) -> (&str, usize, (usize, usize), u8) {
    (r.video_id.as_str(), r.frame_index, r.center, r.label)
}

/// Merges per-frame patches into one dataset: deterministic ordering,
/// optional class balancing by seeded subsampling, then a seeded shuffle.
pub fn merge_patch_sets(mut records: Vec<PatchRecord>, balance: bool, seed: u64) -> Vec<PatchRecord> {
    records.sort_by(|a, b| record_key(a).cmp(&record_key(b)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if balance {
        let (pos, neg): (Vec<_>, Vec<_>) = records.into_iter().partition(|r| r.label == 1);
        let n = pos.len().min(neg.len());
        let mut trim = |v: Vec<PatchRecord>| -> Vec<PatchRecord> {
            if v.len() == n {
                return v;
            }
            let mut keep: Vec<usize> = index::sample(&mut rng, v.len(), n).into_vec();
            keep.sort_unstable();
            let mut slots: Vec<Option<PatchRecord>> = v.into_iter().map(Some).collect();
            keep.into_iter().map(|i| slots[i].take().unwrap()).collect()
        };
        let pos = trim(pos);
        let neg = trim(neg);
        records = pos.into_iter().chain(neg).collect();
        records.sort_by(|a, b| record_key(a).cmp(&record_key(b)));
    }
    let order = index::sample(&mut rng, records.len(), records.len());
    let mut slots: Vec<Option<PatchRecord>> = records.into_iter().map(Some).collect();
    order.iter().map(|i| slots[i].take().unwrap()).collect()
}

/// Samples every frame (in parallel) and merges the results.
pub fn assemble_from_frames(frames: &[FrameSample<'_>], config: &SamplerConfig, seed: u64) -> Result<Vec<PatchRecord>> {
    let per_frame: Vec<Vec<PatchRecord>> = frames
        .par_iter()
        .map(|f| sample_frame(f, config, seed))
        .collect::<Result<_>>()?;
    Ok(merge_patch_sets(per_frame.into_iter().flatten().collect(), config.balance, seed))
}

const INDEX_FILE: &str = "index.tsv";
const PATCH_DIR: &str = "patches";

/// Writes `index.tsv` (one record per line) plus one FMAP per patch.
pub fn write_patch_dataset(dir: &Path, records: &[PatchRecord]) -> Result<()> {
    let patch_dir = dir.join(PATCH_DIR);
    fs::create_dir_all(&patch_dir).map_err(|e| Error::io(&patch_dir, e))?;
    let mut index = Vec::new();
    let (t, c) = records
        .first()
        .map(|r| (r.data.width(), r.data.channels()))
        .unwrap_or((0, 0));
    writeln!(index, "# patch_size={t} channels={c} count={}", records.len()).unwrap();
    writeln!(index, "# file\tvideo_id\tframe\tcx\tcy\tlabel\ttau_level").unwrap();
    for (i, r) in records.iter().enumerate() {
        let name = format!("{i:06}.fmap");
        write_plane_stack(&r.data, &patch_dir.join(&name))?;
        let level = r.tau_level.map_or_else(|| "-".to_string(), |l| l.to_string());
        writeln!(
            index,
            "{PATCH_DIR}/{name}\t{}\t{}\t{}\t{}\t{}\t{level}",
            r.video_id, r.frame_index, r.center.0, r.center.1, r.label
        )
        .unwrap();
    }
    let path = dir.join(INDEX_FILE);
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

pub fn read_patch_dataset(dir: &Path) -> Result<Vec<PatchRecord>> {
    let path = dir.join(INDEX_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row = i + 1;
        let bad = |m: &str| Error::Row {
            row,
            message: format!("{}: {m}", path.display()),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad("expected 7 fields"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad number {s:?}")));
        let label = num(f[5])?;
        if label > 1 {
            return Err(bad("label must be 0 or 1"));
        }
        out.push(PatchRecord {
            data: read_plane_stack(&dir.join(f[0]))?,
            video_id: f[1].to_string(),
            frame_index: num(f[2])?,
            center: (num(f[3])?, num(f[4])?),
            label: label as u8,
            tau_level: if f[6] == "-" { None } else { Some(num(f[6])?) },
        });
    }
    Ok(out)
}
