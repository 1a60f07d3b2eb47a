//! Dense multi-channel scalar planes.
//!
//! Frames, feature maps and patches all share the same H×W×C layout:
//! row-major pixels with the channel index varying fastest.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStack {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl PlaneStack {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        PlaneStack {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{}x{}x{} stack needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(PlaneStack {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a single-channel stack from a row-major plane.
    pub fn from_plane(width: usize, height: usize, plane: Vec<f64>) -> Result<Self> {
        Self::from_vec(width, height, 1, plane)
    }

    /// Interleaves equally sized single-channel planes into one stack.
    pub fn from_planes(width: usize, height: usize, planes: &[&[f64]]) -> Result<Self> {
        let n = width * height;
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::Shape(format!(
                "plane of {} values does not match {}x{}",
                p.len(),
                width,
                height
            )));
        }
        let channels = planes.len();
        let mut data = Vec::with_capacity(n * channels);
        for i in 0..n {
            data.extend(planes.iter().map(|p| p[i]));
        }
        Self::from_vec(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    /// Copies channel `c` out as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        assert!(c < self.channels, "channel {c} out of range");
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Concatenates stacks along the channel axis.
    pub fn concat(parts: &[&PlaneStack]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero stacks".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some(p) = parts.iter().find(|p| p.width != w || p.height != h) {
            return Err(Error::Shape(format!(
                "cannot concat {}x{} with {}x{}",
                w, h, p.width, p.height
            )));
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(w * h * channels);
        for i in 0..w * h {
            for p in parts {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        Self::from_vec(w, h, channels, data)
    }

    /// Extracts the `size`×`size` window whose top-left corner is `(left, top)`.
    pub fn crop(&self, left: usize, top: usize, size: usize) -> Result<Self> {
        if left + size > self.width || top + size > self.height {
            return Err(Error::Shape(format!(
                "crop {size}x{size} at ({left},{top}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(size * size * self.channels);
        for y in top..top + size {
            let start = self.index(left, y, 0);
            data.extend_from_slice(&self.data[start..start + size * self.channels]);
        }
        Self::from_vec(size, size, self.channels, data)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interleave_and_split() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let s = PlaneStack::from_planes(2, 2, &[&a, &b]).unwrap();
        assert_eq!(s.data(), &[1.0, 5.0, 2.0, 6.0, 3.0, 7.0, 4.0, 8.0]);
        assert_eq!(s.channel(1), b.to_vec());
        assert_eq!(s.get(1, 1, 0), 4.0);
    }

    #[test]
    fn concat_stacks_channels() {
        let a = PlaneStack::filled(3, 2, 2, 1.0);
        let b = PlaneStack::filled(3, 2, 1, 2.0);
        let c = PlaneStack::concat(&[&a, &b]).unwrap();
        assert_eq!(c.channels(), 3);
        assert_eq!(c.get(2, 1, 2), 2.0);
        assert_eq!(c.get(2, 1, 1), 1.0);
    }

    #[test]
    fn crop_bounds() {
        let data: Vec<f64> = (0..16).map(f64::from).collect();
        let s = PlaneStack::from_plane(4, 4, data).unwrap();
        let c = s.crop(1, 2, 2).unwrap();
        assert_eq!(c.data(), &[9.0, 10.0, 13.0, 14.0]);
        assert!(s.crop(3, 0, 2).is_err());
    }
}
