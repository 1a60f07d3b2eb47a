use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::plane::PlaneStack;

/// Decoded RGB frames of one video, values in [0,1].
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub video_id: String,
    pub frames: Vec<PlaneStack>,
    pub width: usize,
    pub height: usize,
}

impl FrameSequence {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }
}

const EXTENSIONS: &[&str] = &["png", "pgm", "ppm", "pnm"];

/// Trailing run of digits in the file stem, used as the frame index.
fn frame_number(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn decode_rgb(path: &Path) -> Result<PlaneStack> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let data = rgb
        .into_raw()
        .into_iter()
        .map(|v| f64::from(v).clamp(0.0, 1.0))
        .collect();
    PlaneStack::from_vec(w as usize, h as usize, 3, data)
}

/// Loads every numbered still image in `dir` in ascending index order.
///
/// The video id defaults to the directory name.
pub fn load_frame_sequence(dir: &Path) -> Result<FrameSequence> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        if !ext_ok {
            continue;
        }
        if let Some(n) = frame_number(&path) {
            files.push((n, path));
        }
    }
    if files.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    files.sort();

    let mut frames = Vec::with_capacity(files.len());
    for (_, path) in &files {
        let frame = decode_rgb(path)?;
        if let Some(first) = frames.first() {
            let first: &PlaneStack = first;
            if first.width() != frame.width() || first.height() != frame.height() {
                return Err(Error::Shape(format!(
                    "{} is {}x{}, expected {}x{}",
                    path.display(),
                    frame.width(),
                    frame.height(),
                    first.width(),
                    first.height()
                )));
            }
        }
        frames.push(frame);
    }
    let video_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("video")
        .to_string();
    Ok(FrameSequence {
        video_id,
        width: frames[0].width(),
        height: frames[0].height(),
        frames,
    })
}
