use crate::error::{Error, Result};
use crate::plane::PlaneStack;

/// Channel-major activation tensor (C×H×W) for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Volume {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Volume {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} volume needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Volume {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn shape(&self) -> Shape {
        Shape {
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

impl From<&PlaneStack> for Volume {
    fn from(stack: &PlaneStack) -> Self {
        let (w, h, c) = (stack.width(), stack.height(), stack.channels());
        let mut data = vec![0.0; w * h * c];
        for (i, px) in stack.data().chunks_exact(c).enumerate() {
            for (ch, &v) in px.iter().enumerate() {
                data[ch * w * h + i] = v;
            }
        }
        Volume {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }
}

impl From<&Volume> for PlaneStack {
    fn from(v: &Volume) -> Self {
        let n = v.width * v.height;
        let mut data = vec![0.0; n * v.channels];
        for c in 0..v.channels {
            for (i, &x) in v.plane(c).iter().enumerate() {
                data[i * v.channels + c] = x;
            }
        }
        PlaneStack::from_vec(v.width, v.height, v.channels, data).expect("consistent dimensions")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}
