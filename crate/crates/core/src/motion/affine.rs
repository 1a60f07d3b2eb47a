//! Global (camera) motion as a six-parameter affine model, fitted to a
//! dense flow field by iteratively reweighted least squares.

use nalgebra::{Matrix3, Vector3};

use super::flow::FlowField;
use crate::error::{Error, Result};

/// `(x, y) ↦ (a1 + a2·x + a3·y, a4 + a5·x + a6·y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMotion {
    pub a: [f64; 6],
}

impl AffineMotion {
    pub const ZERO: AffineMotion = AffineMotion { a: [0.0; 6] };

    pub fn new(a: [f64; 6]) -> Self {
        AffineMotion { a }
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let a = &self.a;
        (a[0] + a[1] * x + a[2] * y, a[3] + a[4] * x + a[5] * y)
    }

    pub fn to_flow(&self, width: usize, height: usize) -> FlowField {
        FlowField::from_fn(width, height, |x, y| self.eval(x, y))
    }
}

pub const TUKEY_C: f64 = 4.685;
/// Converts a median absolute deviation to a Gaussian-consistent scale.
const MAD_SCALE: f64 = 1.4826;
pub const MAX_ITERATIONS: usize = 10;
pub const CONVERGENCE: f64 = 1e-8;
/// Floor on the Tukey cutoff, so an exact majority fit keeps its inliers.
const MIN_CUTOFF: f64 = 1e-9;

fn median(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    *m
}

fn tukey(r: f64, c: f64) -> f64 {
    if r >= c {
        0.0
    } else {
        let q = r / c;
        (1.0 - q * q).powi(2)
    }
}

/// Weighted least squares for both flow components, in centred and scaled
/// coordinates for conditioning.
fn weighted_fit(flow: &FlowField, weights: &[f64]) -> Result<AffineMotion> {
    let (w, h) = (flow.width, flow.height);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let s = (w.max(h) as f64 / 2.0).max(1.0);
    let mut ata = Matrix3::<f64>::zeros();
    let mut atu = Vector3::<f64>::zeros();
    let mut atv = Vector3::<f64>::zeros();
    let mut support = 0usize;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let wt = weights[i];
            if wt <= 0.0 {
                continue;
            }
            support += 1;
            let row = Vector3::new(1.0, (x as f64 - cx) / s, (y as f64 - cy) / s);
            ata += wt * row * row.transpose();
            atu += wt * flow.u[i] * row;
            atv += wt * flow.v[i] * row;
        }
    }
    if support < 3 {
        return Err(Error::Degenerate(format!("{support} support pixels for a 6-parameter fit")));
    }
    let chol = ata
        .cholesky()
        .ok_or_else(|| Error::Degenerate("collinear support pixels".into()))?;
    let bu = chol.solve(&atu);
    let bv = chol.solve(&atv);
    let to_pixels = |b: Vector3<f64>| {
        let (gx, gy) = (b[1] / s, b[2] / s);
        (b[0] - gx * cx - gy * cy, gx, gy)
    };
    let (a1, a2, a3) = to_pixels(bu);
    let (a4, a5, a6) = to_pixels(bv);
    let model = AffineMotion::new([a1, a2, a3, a4, a5, a6]);
    if model.a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite affine parameters".into()));
    }
    Ok(model)
}

fn residual_norms(flow: &FlowField, model: &AffineMotion) -> Vec<f64> {
    let w = flow.width;
    (0..flow.u.len())
        .map(|i| {
            let (mu, mv) = model.eval((i % w) as f64, (i / w) as f64);
            (mu - flow.u[i]).hypot(mv - flow.v[i])
        })
        .collect()
}

/// Robust affine fit with Tukey biweights (cutoff 4.685 × MAD scale).
///
/// Starts from the per-component median translation, so a minority of
/// independently moving pixels never enters the first weighted solve.
pub fn estimate_global_affine(flow: &FlowField) -> Result<AffineMotion> {
    let n = flow.width * flow.height;
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} pixels")));
    }
    if flow.u.iter().chain(&flow.v).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite flow".into()));
    }
    let mut model = AffineMotion::new([
        median(&mut flow.u.clone()),
        0.0,
        0.0,
        median(&mut flow.v.clone()),
        0.0,
        0.0,
    ]);
    for _ in 0..MAX_ITERATIONS {
        let r = residual_norms(flow, &model);
        let scale = MAD_SCALE * median(&mut r.clone());
        let cutoff = (TUKEY_C * scale).max(MIN_CUTOFF);
        let weights: Vec<f64> = r.iter().map(|&ri| tukey(ri, cutoff)).collect();
        let next = weighted_fit(flow, &weights)?;
        let delta = next
            .a
            .iter()
            .zip(&model.a)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        model = next;
        if delta < CONVERGENCE {
            break;
        }
    }
    Ok(model)
}
