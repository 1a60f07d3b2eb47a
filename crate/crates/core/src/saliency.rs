//! Dense saliency maps from patch classifier probabilities.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::cnn::NetworkModel;
use crate::error::{Error, Result};
use crate::plane::PlaneStack;

/// Gain applied to every splat peak before normalization.
pub const SPLAT_GAIN: f64 = 10.0;

/// Anything that maps a `t×t×C` patch to a salient-class probability.
pub trait PatchClassifier: Sync {
    /// Channel count expected in every patch, if fixed.
    fn input_channels(&self) -> Option<usize>;
    fn classify(&self, patch: &PlaneStack) -> Result<f64>;
}

impl PatchClassifier for NetworkModel {
    fn input_channels(&self) -> Option<usize> {
        Some(self.input_shape().channels)
    }

    fn classify(&self, patch: &PlaneStack) -> Result<f64> {
        self.predict_patch(patch)
    }
}

/// Wraps a closure as a classifier accepting any channel count.
pub struct FnClassifier<F>(pub F);

impl<F> PatchClassifier for FnClassifier<F>
where
    F: Fn(&PlaneStack) -> f64 + Sync,
{
    fn input_channels(&self) -> Option<usize> {
        None
    }

    fn classify(&self, patch: &PlaneStack) -> Result<f64> {
        Ok((self.0)(patch))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub patch_size: usize,
    pub stride: usize,
}

impl SaliencyMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    pub fn to_plane_stack(&self) -> PlaneStack {
        PlaneStack::from_plane(self.width, self.height, self.values.clone()).expect("map dimensions are consistent")
    }
}

/// Peak height of a splat for probability `f` and spread `sigma`.
pub fn splat_peak(f: f64, sigma: f64) -> f64 {
    SPLAT_GAIN * f / (2.0 * PI * sigma * sigma)
}

/// Adds an untruncated Gaussian of peak `10 f / (2πσ²)` centred on `center`.
pub fn splat_gaussian(
    canvas: &mut [f64],
    width: usize,
    height: usize,
    center: (usize, usize),
    f: f64,
    sigma: f64,
) -> Result<()> {
    if canvas.len() != width * height {
        return Err(Error::Shape(format!(
            "canvas has {} values, expected {width}×{height}",
            canvas.len()
        )));
    }
    if center.0 >= width || center.1 >= height {
        return Err(Error::InvalidArgument(format!(
            "splat center {center:?} outside {width}×{height} frame"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::InvalidArgument(format!("probability {f} outside [0,1]")));
    }
    if f == 0.0 {
        return Ok(());
    }
    let peak = splat_peak(f, sigma);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let gx: Vec<f64> = (0..width)
        .map(|x| {
            let d = x as f64 - center.0 as f64;
            (-d * d * inv).exp()
        })
        .collect();
    for (y, row) in canvas.chunks_exact_mut(width).enumerate() {
        let d = y as f64 - center.1 as f64;
        let gy = peak * (-d * d * inv).exp();
        for (c, g) in row.iter_mut().zip(&gx) {
            *c += gy * g;
        }
    }
    Ok(())
}

/// Patch origins along one axis: stride `⌊t/2⌋`, last origin flush with the
/// border.
pub fn grid_positions(len: usize, t: usize) -> Vec<usize> {
    if t == 0 || len < t {
        return Vec::new();
    }
    let stride = (t / 2).max(1);
    let last = len - t;
    let mut out: Vec<usize> = (0..=last).step_by(stride).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

/// Centre pixel of the patch whose top-left corner is `origin`.
pub fn grid_center(origin: (usize, usize), t: usize) -> (usize, usize) {
    (origin.0 + t / 2, origin.1 + t / 2)
}

/// Classifies every grid patch, in row-major grid order.
pub fn classify_grid<C: PatchClassifier + ?Sized>(
    model: &C,
    features: &PlaneStack,
    t: usize,
) -> Result<Vec<((usize, usize), f64)>> {
    if t == 0 || features.width() < t || features.height() < t {
        return Err(Error::InvalidArgument(format!(
            "frame {}×{} is smaller than the {t}×{t} patch",
            features.width(),
            features.height()
        )));
    }
    if let Some(c) = model.input_channels() {
        if c != features.channels() {
            return Err(Error::Shape(format!(
                "model expects {c} channels, features have {}",
                features.channels()
            )));
        }
    }
    let xs = grid_positions(features.width(), t);
    let ys = grid_positions(features.height(), t);
    let origins: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    origins
        .par_iter()
        .map(|&(x, y)| {
            let p = model.classify(&features.crop(x, y, t)?)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("classifier returned {p} outside [0,1]")));
            }
            Ok((grid_center((x, y), t), p))
        })
        .collect()
}

/// Sum of splats with `σ = t/2`, before normalization.
pub fn accumulate_splats(width: usize, height: usize, t: usize, splats: &[((usize, usize), f64)]) -> Result<Vec<f64>> {
    let sigma = t as f64 / 2.0;
    let mut canvas = vec![0.0; width * height];
    for &(c, p) in splats {
        splat_gaussian(&mut canvas, width, height, c, p, sigma)?;
    }
    Ok(canvas)
}

/// Dense map over the half-overlap grid, normalized by its maximum.
pub fn predict_dense_map<C: PatchClassifier + ?Sized>(model: &C, features: &PlaneStack, t: usize) -> Result<SaliencyMap> {
    let splats = classify_grid(model, features, t)?;
    let (w, h) = (features.width(), features.height());
    let mut values = accumulate_splats(w, h, t, &splats)?;
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(SaliencyMap {
        width: w,
        height: h,
        values,
        patch_size: t,
        stride: (t / 2).max(1),
    })
}
