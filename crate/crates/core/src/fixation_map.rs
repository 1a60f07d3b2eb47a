//! Gaze-density ground truth built from fixation points.

use crate::error::{Error, Result};
use crate::plane::PlaneStack;

/// Gaussians are cut off where `exp(-r²/2σ²)` falls below this fraction of
/// their peak.
pub const TRUNCATION_TAIL: f64 = 1e-4;

/// Default Gaussian spread as a fraction of the frame width.
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.02;

pub fn default_sigma(width: usize) -> f64 {
    DEFAULT_SIGMA_FRACTION * width as f64
}

/// Sum of unit-height Gaussians at every fixation, scaled so the global
/// maximum is exactly 1. An empty fixation set yields an all-zero map with
/// `source_fixation_count == 0`, which callers treat as "skip this frame".
#[derive(Debug, Clone, PartialEq)]
pub struct FixationMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    sigma_px: f64,
    source_fixation_count: usize,
}

/// Radius (in pixels) beyond which a Gaussian of spread `sigma` is dropped.
pub fn truncation_radius(sigma: f64) -> f64 {
    sigma * (-2.0 * TRUNCATION_TAIL.ln()).sqrt()
}

pub fn build_wooding_map(
    fixations: &[(usize, usize)],
    width: usize,
    height: usize,
    sigma_px: f64,
) -> Result<FixationMap> {
    if !(sigma_px > 0.0) || !sigma_px.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma_px must be > 0, got {sigma_px}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("empty frame".into()));
    }
    if let Some(&(x, y)) = fixations.iter().find(|&&(x, y)| x >= width || y >= height) {
        return Err(Error::InvalidArgument(format!(
            "fixation ({x}, {y}) outside {width}x{height}"
        )));
    }

    let mut values = vec![0.0; width * height];
    let radius = truncation_radius(sigma_px);
    let r = radius.ceil() as isize;
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    for &(fx, fy) in fixations {
        let (fx, fy) = (fx as isize, fy as isize);
        let y0 = (fy - r).max(0);
        let y1 = (fy + r).min(height as isize - 1);
        let x0 = (fx - r).max(0);
        let x1 = (fx + r).min(width as isize - 1);
        for y in y0..=y1 {
            let dy = (y - fy) as f64;
            for x in x0..=x1 {
                let dx = (x - fx) as f64;
                let d2 = dx * dx + dy * dy;
                if d2 <= radius * radius {
                    values[y as usize * width + x as usize] += (-d2 * inv).exp();
                }
            }
        }
    }

    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    Ok(FixationMap {
        width,
        height,
        values,
        sigma_px,
        source_fixation_count: fixations.len(),
    })
}

impl FixationMap {
    /// A map with explicit values, normalized by its maximum. Mainly for
    /// fixtures and for ingesting externally computed ground truth.
    pub fn from_values(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "{} values for {width}x{height} map",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument("map values must be finite and >= 0".into()));
        }
        let max = values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            values.iter_mut().for_each(|v| *v /= max);
        }
        Ok(FixationMap {
            width,
            height,
            values,
            sigma_px: 0.0,
            source_fixation_count: usize::from(max > 0.0),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sigma_px(&self) -> f64 {
        self.sigma_px
    }

    pub fn source_fixation_count(&self) -> usize {
        self.source_fixation_count
    }

    pub fn is_empty(&self) -> bool {
        self.source_fixation_count == 0
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Stored value at a pixel, no interpolation.
    pub fn value_at(&self, x: usize, y: usize) -> Result<f64> {
        if x >= self.width || y >= self.height {
            return Err(Error::InvalidArgument(format!(
                "({x}, {y}) outside {}x{} map",
                self.width, self.height
            )));
        }
        Ok(self.values[y * self.width + x])
    }

    #[inline]
    pub(crate) fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn to_plane_stack(&self) -> PlaneStack {
        PlaneStack::from_plane(self.width, self.height, self.values.clone())
            .expect("dimensions are consistent")
    }
}

pub fn map_value_at(map: &FixationMap, x: usize, y: usize) -> Result<f64> {
    map.value_at(x, y)
}
