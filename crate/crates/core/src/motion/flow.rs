//! Dense optical flow by pyramidal block matching.
//!
//! Each pixel of the current frame is matched against the previous frame
//! with an 8×8 SAD window. Coarse levels seed finer ones; the integer match
//! at the finest level is refined to sub-pixel precision by fitting a
//! parabola through the SAD costs on each axis.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plane::PlaneStack;

pub const PYRAMID_LEVELS: usize = 3;
pub const BLOCK_SIZE: usize = 8;
/// Integer search radius around the propagated estimate at every level.
pub const SEARCH_RADIUS: i32 = 3;

/// Per-pixel displacement (pixels/frame) such that
/// `cur(x, y) ≈ prev(x - u, y - v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    /// Samples a flow field from a closure over pixel coordinates.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x as f64, y as f64);
                out.u[y * width + x] = u;
                out.v[y * width + x] = v;
            }
        }
        out
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v)).collect()
    }
}

#[derive(Debug, Clone)]
struct Gray {
    w: usize,
    h: usize,
    px: Vec<f64>,
}

impl Gray {
    #[inline]
    fn at(&self, x: i32, y: i32) -> f64 {
        let x = x.clamp(0, self.w as i32 - 1) as usize;
        let y = y.clamp(0, self.h as i32 - 1) as usize;
        self.px[y * self.w + x]
    }

    fn downsample(&self) -> Gray {
        let w = self.w.div_ceil(2);
        let h = self.h.div_ceil(2);
        let mut px = Vec::with_capacity(w * h);
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                let (sx, sy) = (2 * x, 2 * y);
                px.push(
                    0.25 * (self.at(sx, sy) + self.at(sx + 1, sy) + self.at(sx, sy + 1) + self.at(sx + 1, sy + 1)),
                );
            }
        }
        Gray { w, h, px }
    }
}

/// Rec. 601 luma of an RGB stack; single-channel stacks pass through.
pub fn luminance(frame: &PlaneStack) -> Vec<f64> {
    match frame.channels() {
        1 => frame.data().to_vec(),
        c if c >= 3 => frame
            .data()
            .chunks_exact(c)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect(),
        c => frame.data().chunks_exact(c).map(|p| p[0]).collect(),
    }
}

fn sad(prev: &Gray, cur: &Gray, x: i32, y: i32, dx: i32, dy: i32) -> f64 {
    let half = BLOCK_SIZE as i32 / 2;
    let mut acc = 0.0;
    for by in -half..half {
        for bx in -half..half {
            acc += (cur.at(x + bx, y + by) - prev.at(x + bx - dx, y + by - dy)).abs();
        }
    }
    acc
}

/// Integer search around `(gx, gy)`; ties keep the candidate closest to the
/// guess, so textureless regions inherit the coarser estimate.
fn search(prev: &Gray, cur: &Gray, x: i32, y: i32, gx: i32, gy: i32) -> (i32, i32, f64) {
    let mut best = (gx, gy, sad(prev, cur, x, y, gx, gy));
    let mut best_r = 0;
    for dy in -SEARCH_RADIUS..=SEARCH_RADIUS {
        for dx in -SEARCH_RADIUS..=SEARCH_RADIUS {
            if dx == 0 && dy == 0 {
                continue;
            }
            let cost = sad(prev, cur, x, y, gx + dx, gy + dy);
            let r = dx.abs().max(dy.abs());
            if cost < best.2 - 1e-12 || (cost <= best.2 + 1e-12 && r < best_r) {
                best = (gx + dx, gy + dy, cost);
                best_r = r;
            }
        }
    }
    best
}

fn parabolic_offset(minus: f64, center: f64, plus: f64) -> f64 {
    let denom = minus - 2.0 * center + plus;
    if denom <= 1e-12 {
        return 0.0;
    }
    (0.5 * (minus - plus) / denom).clamp(-0.5, 0.5)
}

fn match_level(prev: &Gray, cur: &Gray, guess: &[(i32, i32)], refine: bool) -> Vec<(f64, f64)> {
    let w = cur.w;
    (0..cur.h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).map(move |x| {
                let (gx, gy) = guess[y * w + x];
                let (x, y) = (x as i32, y as i32);
                let (dx, dy, c0) = search(prev, cur, x, y, gx, gy);
                // an exact integer match needs no sub-pixel correction
                if !refine || c0 <= 1e-12 {
                    return (f64::from(dx), f64::from(dy));
                }
                let ox = parabolic_offset(sad(prev, cur, x, y, dx - 1, dy), c0, sad(prev, cur, x, y, dx + 1, dy));
                let oy = parabolic_offset(sad(prev, cur, x, y, dx, dy - 1), c0, sad(prev, cur, x, y, dx, dy + 1));
                (f64::from(dx) + ox, f64::from(dy) + oy)
            })
        })
        .collect()
}

pub fn estimate_optical_flow(prev: &PlaneStack, cur: &PlaneStack) -> Result<FlowField> {
    if prev.width() != cur.width() || prev.height() != cur.height() {
        return Err(Error::Shape(format!(
            "flow between {}x{} and {}x{} frames",
            prev.width(),
            prev.height(),
            cur.width(),
            cur.height()
        )));
    }
    let (w, h) = (cur.width(), cur.height());
    let mut prev_pyr = vec![Gray { w, h, px: luminance(prev) }];
    let mut cur_pyr = vec![Gray { w, h, px: luminance(cur) }];
    for _ in 1..PYRAMID_LEVELS {
        let (p, c) = (prev_pyr.last().unwrap(), cur_pyr.last().unwrap());
        if p.w < 2 * BLOCK_SIZE || p.h < 2 * BLOCK_SIZE {
            break;
        }
        let (p, c) = (p.downsample(), c.downsample());
        prev_pyr.push(p);
        cur_pyr.push(c);
    }

    let top = prev_pyr.len() - 1;
    let mut guess = vec![(0, 0); cur_pyr[top].w * cur_pyr[top].h];
    let mut flow = Vec::new();
    for level in (0..=top).rev() {
        let (p, c) = (&prev_pyr[level], &cur_pyr[level]);
        flow = match_level(p, c, &guess, level == 0);
        if level > 0 {
            let finer = &cur_pyr[level - 1];
            guess = (0..finer.h)
                .flat_map(|y| (0..finer.w).map(move |x| (x, y)))
                .map(|(x, y)| {
                    let (u, v) = flow[(y / 2).min(c.h - 1) * c.w + (x / 2).min(c.w - 1)];
                    ((2.0 * u).round() as i32, (2.0 * v).round() as i32)
                })
                .collect();
        }
    }
    let (u, v) = flow.into_iter().unzip();
    Ok(FlowField { width: w, height: h, u, v })
}
