//! HSI colour conversion and the seven per-pixel colour-contrast
//! descriptors V1..V7.
//!
//! V1..V5 accumulate pairwise interaction terms over the 8-connected
//! neighbourhood and divide by the neighbour count; V6 and V7 are
//! point-wise dominance measures.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::plane::PlaneStack;

/// Floor on the interaction of a pixel whose saturation (or intensity)
/// approaches zero.
pub const K_MIN: f64 = 0.21;
/// Hues below this wheel fraction (45°) count as warm.
pub const WARM_HUE_LIMIT: f64 = 0.125;
/// Boundary between active (< 0.5) and passive hues for the opponent term.
pub const OPPONENT_SPLIT: f64 = 0.5;

pub const CONTRAST_CHANNELS: usize = 7;

/// Hue as a fraction of the colour wheel in [0,1); saturation and intensity
/// in [0,1]. Achromatic pixels carry hue 0.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiImage {
    pub width: usize,
    pub height: usize,
    pub hue: Vec<f64>,
    pub sat: Vec<f64>,
    pub int: Vec<f64>,
}

/// Converts one RGB triple to (hue, saturation, intensity).
pub fn rgb_pixel_to_hsi(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let int = (r + g + b) / 3.0;
    let min = r.min(g).min(b);
    if min == r.max(g).max(b) {
        return (0.0, 0.0, int);
    }
    let sat = if int > 0.0 { (1.0 - min / int).clamp(0.0, 1.0) } else { 0.0 };
    if sat == 0.0 {
        return (0.0, 0.0, int);
    }
    let num = 0.5 * ((r - g) + (r - b));
    let den = ((r - g) * (r - g) + (r - b) * (g - b)).sqrt();
    if den <= 0.0 {
        return (0.0, sat, int);
    }
    let theta = (num / den).clamp(-1.0, 1.0).acos();
    let angle = if b <= g { theta } else { TAU - theta };
    let mut hue = angle / TAU;
    if hue >= 1.0 {
        hue = 0.0;
    }
    (hue, sat, int)
}

pub fn rgb_to_hsi(frame: &PlaneStack) -> Result<HsiImage> {
    if frame.channels() < 3 {
        return Err(Error::Shape(format!(
            "HSI conversion needs 3 colour channels, got {}",
            frame.channels()
        )));
    }
    let n = frame.width() * frame.height();
    let (mut hue, mut sat, mut int) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for p in frame.data().chunks_exact(frame.channels()) {
        let (h, s, i) = rgb_pixel_to_hsi(p[0], p[1], p[2]);
        hue.push(h);
        sat.push(s);
        int.push(i);
    }
    Ok(HsiImage {
        width: frame.width(),
        height: frame.height(),
        hue,
        sat,
        int,
    })
}

/// Saturation and intensity interaction factors of pixel `i` with neighbour `j`.
pub fn interaction_factors(hsi: &HsiImage, i: usize, j: usize) -> (f64, f64) {
    (
        interaction(hsi.sat[i], hsi.sat[j]),
        interaction(hsi.int[i], hsi.int[j]),
    )
}

#[inline]
pub fn interaction(own: f64, other: f64) -> f64 {
    (own + other) / 2.0 * (K_MIN + (1.0 - K_MIN) * own)
}

/// Distance between two hues on the wheel, in [0, 0.5].
#[inline]
pub fn hue_difference(hi: f64, hj: f64) -> f64 {
    let d = (hi - hj).abs();
    if d <= 0.5 {
        d
    } else {
        1.0 - d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastStack {
    /// H×W×7: colour, hue, opponent, saturation and intensity contrast,
    /// warm dominance, brightness/saturation dominance.
    pub v: PlaneStack,
}

const OFFSETS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Computes V1..V7. Border pixels average over the neighbours that exist
/// (3 at corners, 5 on edges).
pub fn contrast_descriptors(hsi: &HsiImage) -> ContrastStack {
    let (w, h) = (hsi.width, hsi.height);
    let n = w * h;
    let mut sums = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut count = vec![0u32; n];

    // accumulate one neighbour direction at a time over the overlapping region
    for &(dx, dy) in &OFFSETS {
        let xs = (-dx).max(0) as usize..(w as isize - dx.max(0)).max(0) as usize;
        let ys = (-dy).max(0) as usize..(h as isize - dy.max(0)).max(0) as usize;
        for y in ys.clone() {
            let ny = (y as isize + dy) as usize;
            for x in xs.clone() {
                let i = y * w + x;
                let j = ny * w + (x as isize + dx) as usize;
                let (si, sj, ii, ij) = (hsi.sat[i], hsi.sat[j], hsi.int[i], hsi.int[j]);
                let base = interaction(si, sj) * interaction(ii, ij);
                let dhue = hue_difference(hsi.hue[i], hsi.hue[j]);
                sums[0][i] += base;
                sums[1][i] += base * dhue;
                if hsi.hue[i] < OPPONENT_SPLIT && hsi.hue[j] >= OPPONENT_SPLIT {
                    sums[2][i] += base * dhue;
                }
                sums[3][i] += base * (si - sj).abs();
                sums[4][i] += base * (ii - ij).abs();
                count[i] += 1;
            }
        }
    }

    let mut data = Vec::with_capacity(n * CONTRAST_CHANNELS);
    for i in 0..n {
        let k = f64::from(count[i].max(1));
        for s in &sums {
            data.push(s[i] / k);
        }
        let dominance = hsi.sat[i] * hsi.int[i];
        let warm = if (0.0..WARM_HUE_LIMIT).contains(&hsi.hue[i]) { dominance } else { 0.0 };
        data.push(warm);
        data.push(dominance);
    }
    ContrastStack {
        v: PlaneStack::from_vec(w, h, CONTRAST_CHANNELS, data).expect("consistent dimensions"),
    }
}

/// HSV-style colour planes: HSI hue and saturation with value = max(R,G,B).
pub fn hsv_planes(frame: &PlaneStack) -> Result<PlaneStack> {
    let hsi = rgb_to_hsi(frame)?;
    let value: Vec<f64> = frame
        .data()
        .chunks_exact(frame.channels())
        .map(|p| p[0].max(p[1]).max(p[2]))
        .collect();
    PlaneStack::from_planes(frame.width(), frame.height(), &[&hsi.hue, &hsi.sat, &value])
}
