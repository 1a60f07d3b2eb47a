//! Deterministic inputs shared by the kernel benchmarks.

use salnet_core::cnn::Volume;
use salnet_core::PlaneStack;

/// Smooth aperiodic pattern in [0,1].
pub fn pattern(x: f64, y: f64, c: usize) -> f64 {
    let p = c as f64;
    0.5 + 0.2 * (0.21 * x + 0.07 * y + p).sin() + 0.15 * (-0.11 * x + 0.23 * y + 2.0 * p).sin()
        + 0.1 * (0.37 * x - 0.19 * y).cos()
}

/// RGB frame whose content is shifted by `(dx, dy)`.
pub fn frame(width: usize, height: usize, dx: f64, dy: f64) -> PlaneStack {
    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                data.push(pattern(x as f64 - dx, y as f64 - dy, c).clamp(0.0, 1.0));
            }
        }
    }
    PlaneStack::from_vec(width, height, 3, data).expect("consistent dimensions")
}

pub fn volume(channels: usize, height: usize, width: usize) -> Volume {
    let data = (0..channels * height * width)
        .map(|i| pattern((i % width) as f64, (i / width) as f64, i % 7) - 0.5)
        .collect();
    Volume::from_vec(channels, height, width, data).expect("consistent dimensions")
}

/// Deterministic weights in [-0.05, 0.05].
pub fn weights(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.05 * ((i as f64) * 0.618).sin()).collect()
}

/// Single-channel map with a bump and fixations around it.
pub fn map_with_fixations(width: usize, height: usize) -> (PlaneStack, Vec<(usize, usize)>) {
    let (cx, cy) = (width as f64 / 3.0, height as f64 / 2.0);
    let values = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / 200.0).exp() + 0.01 * pattern(x, y, 0)
        })
        .collect();
    let fix = (0..20).map(|k| ((cx as usize + k % 5) % width, (cy as usize + k / 5) % height)).collect();
    (PlaneStack::from_plane(width, height, values).expect("consistent dimensions"), fix)
}
