//! Residual-motion feature channel: dense flow minus the fitted global
//! affine motion, as a per-frame normalized magnitude.

mod affine;
mod flow;

pub use affine::{estimate_global_affine, AffineMotion};
pub use flow::{estimate_optical_flow, luminance, FlowField, BLOCK_SIZE, PYRAMID_LEVELS};

use crate::error::{Error, Result};
use crate::plane::PlaneStack;

/// Raw residual maxima at or below this are floating-point noise from an
/// exact fit and normalize to an all-zero map.
pub const RESIDUAL_NOISE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMotionMap {
    pub width: usize,
    pub height: usize,
    /// |M_θ − M_c| divided by its frame maximum; values in [0,1].
    pub magnitude: Vec<f64>,
}

impl ResidualMotionMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        ResidualMotionMap {
            width,
            height,
            magnitude: vec![0.0; width * height],
        }
    }

    pub fn to_plane_stack(&self) -> PlaneStack {
        PlaneStack::from_plane(self.width, self.height, self.magnitude.clone())
            .expect("consistent dimensions")
    }
}

/// Un-normalized per-pixel |M_θ(x,y) − M_c(x,y)|.
pub fn residual_magnitude(flow: &FlowField, affine: &AffineMotion) -> Vec<f64> {
    let w = flow.width;
    (0..flow.u.len())
        .map(|i| {
            let (gu, gv) = affine.eval((i % w) as f64, (i / w) as f64);
            (gu - flow.u[i]).hypot(gv - flow.v[i])
        })
        .collect()
}

pub fn residual_motion(flow: &FlowField, affine: &AffineMotion) -> Result<ResidualMotionMap> {
    if flow.u.len() != flow.width * flow.height || flow.v.len() != flow.u.len() {
        return Err(Error::Shape("flow components do not match its dimensions".into()));
    }
    let mut magnitude = residual_magnitude(flow, affine);
    let max = magnitude.iter().copied().fold(0.0, f64::max);
    if max > RESIDUAL_NOISE_FLOOR {
        magnitude.iter_mut().for_each(|m| *m /= max);
    } else {
        magnitude.iter_mut().for_each(|m| *m = 0.0);
    }
    Ok(ResidualMotionMap {
        width: flow.width,
        height: flow.height,
        magnitude,
    })
}

/// Flow, global fit and residual for one frame pair.
pub fn residual_motion_between(prev: &PlaneStack, cur: &PlaneStack) -> Result<ResidualMotionMap> {
    let flow = estimate_optical_flow(prev, cur)?;
    let affine = estimate_global_affine(&flow)?;
    residual_motion(&flow, &affine)
}

/// Residual-motion channel for every frame; the first frame has no
/// predecessor and gets a zero map.
pub fn residual_motion_sequence(frames: &[PlaneStack]) -> Result<Vec<ResidualMotionMap>> {
    use rayon::prelude::*;
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let mut out = vec![ResidualMotionMap::zeros(first.width(), first.height())];
    let rest: Vec<ResidualMotionMap> = frames
        .par_windows(2)
        .map(|pair| residual_motion_between(&pair[0], &pair[1]))
        .collect::<Result<_>>()?;
    out.extend(rest);
    Ok(out)
}
