//! Seeded synthetic videos with planted salient objects and matching gaze,
//! used by tests, benchmarks and the `synth` subcommand.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::plane::PlaneStack;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureKind {
    /// A bright disc moving over a static texture.
    BrightBlob,
    /// A disc of the same texture statistics as the background, visible
    /// only through its motion.
    MotionDefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub kind: FixtureKind,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub blob_radius: f64,
    /// Gaze points per frame.
    pub subjects: usize,
    /// Standard deviation of gaze scatter around the object centre.
    pub gaze_jitter: f64,
    /// Frames at the start of each video without recorded gaze.
    pub unlabelled_lead: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            kind: FixtureKind::BrightBlob,
            width: 64,
            height: 64,
            frames: 10,
            blob_radius: 5.0,
            subjects: 5,
            gaze_jitter: 1.0,
            unlabelled_lead: 1,
        }
    }
}

/// One rendered video.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub video_id: String,
    pub frames: Vec<PlaneStack>,
    /// Object centre per frame.
    pub centers: Vec<(f64, f64)>,
    /// Gaze points per frame as `(x, y, subject)`.
    pub fixations: Vec<Vec<(usize, usize, usize)>>,
}

impl SyntheticVideo {
    pub fn points(&self, frame: usize) -> Vec<(usize, usize)> {
        self.fixations[frame].iter().map(|&(x, y, _)| (x, y)).collect()
    }
}

struct Texture {
    waves: Vec<[f64; 5]>,
    noise_seed: u64,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..12)
            .map(|i| {
                let angle = rng.random_range(0.0..TAU);
                let wavelength = rng.random_range(5.0..13.0);
                let k = TAU / wavelength;
                [
                    k * angle.cos(),
                    k * angle.sin(),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.05..0.09),
                    (i % 3) as f64,
                ]
            })
            .collect();
        Texture {
            waves,
            noise_seed: rng.random(),
        }
    }

    fn sample(&self, x: f64, y: f64, c: usize) -> f64 {
        let mut v = 0.4;
        for w in self.waves.iter().filter(|w| w[4] as usize == c) {
            v += w[3] * (w[0] * x + w[1] * y + w[2]).sin();
        }
        let cell = (x.round() as i64 as u64)
            .wrapping_mul(0x9E37_79B9)
            .wrapping_add((y.round() as i64 as u64).wrapping_mul(0x85EB_CA6B))
            .wrapping_add(c as u64)
            ^ self.noise_seed;
        let noise = ((cell.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 40) as f64 / (1u64 << 24) as f64) - 0.5;
        (v + 0.04 * noise).clamp(0.0, 1.0)
    }
}

/// Renders one video; the result depends only on `spec`, `seed` and `index`.
pub fn render_video(spec: &FixtureSpec, seed: u64, index: usize) -> SyntheticVideo {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
    let background = Texture::new(&mut rng);
    let object = Texture::new(&mut rng);
    let margin = spec.blob_radius + 6.0;
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut pos = (rng.random_range(margin..w - margin), rng.random_range(margin..h - margin));
    let speed = rng.random_range(1.5..2.5);
    let heading = rng.random_range(0.0..TAU);
    let mut vel = (speed * heading.cos(), speed * heading.sin());

    let mut frames = Vec::with_capacity(spec.frames);
    let mut centers = Vec::with_capacity(spec.frames);
    let mut fixations = Vec::with_capacity(spec.frames);
    for f in 0..spec.frames {
        let r = spec.blob_radius;
        let mut data = Vec::with_capacity(spec.width * spec.height * 3);
        for y in 0..spec.height {
            for x in 0..spec.width {
                let (dx, dy) = (x as f64 - pos.0, y as f64 - pos.1);
                // soft one-pixel edge
                let cover = (r + 0.5 - dx.hypot(dy)).clamp(0.0, 1.0);
                for c in 0..3 {
                    let bg = background.sample(x as f64, y as f64, c);
                    let fg = match spec.kind {
                        FixtureKind::BrightBlob => [0.98, 0.95, 0.9][c],
                        FixtureKind::MotionDefined => object.sample(dx + 100.0, dy + 100.0, c),
                    };
                    data.push(bg * (1.0 - cover) + fg * cover);
                }
            }
        }
        frames.push(PlaneStack::from_vec(spec.width, spec.height, 3, data).expect("consistent dimensions"));
        centers.push(pos);

        let mut gaze = Vec::new();
        if f >= spec.unlabelled_lead {
            for s in 0..spec.subjects {
                let gx = pos.0 + spec.gaze_jitter * standard_normal(&mut rng);
                let gy = pos.1 + spec.gaze_jitter * standard_normal(&mut rng);
                let x = gx.round().clamp(0.0, w - 1.0) as usize;
                let y = gy.round().clamp(0.0, h - 1.0) as usize;
                gaze.push((x, y, s));
            }
        }
        fixations.push(gaze);

        pos = (pos.0 + vel.0, pos.1 + vel.1);
        if pos.0 < margin || pos.0 > w - margin {
            vel.0 = -vel.0;
            pos.0 = pos.0.clamp(margin, w - margin);
        }
        if pos.1 < margin || pos.1 > h - margin {
            vel.1 = -vel.1;
            pos.1 = pos.1.clamp(margin, h - margin);
        }
    }
    SyntheticVideo {
        video_id: format!("vid{index:02}"),
        frames,
        centers,
        fixations,
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Files written by [`write_fixture`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub root: PathBuf,
    pub train_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub videos: Vec<SyntheticVideo>,
}

/// Writes `train_videos + test_videos` videos as PNG frames, one gaze CSV
/// per video, and `train.tsv` / `test.tsv` manifests under `root`.
pub fn write_fixture(root: &Path, spec: &FixtureSpec, seed: u64, train_videos: usize, test_videos: usize) -> Result<FixturePaths> {
    let mut videos = Vec::new();
    let mut manifests = [String::from("split\ttrain\n"), String::from("split\ttest\n")];
    fs::create_dir_all(root.join("fixations")).map_err(|e| Error::io(root, e))?;
    for i in 0..train_videos + test_videos {
        let video = render_video(spec, seed, i);
        let frame_dir = root.join("videos").join(&video.video_id);
        fs::create_dir_all(&frame_dir).map_err(|e| Error::io(&frame_dir, e))?;
        for (f, frame) in video.frames.iter().enumerate() {
            write_png(frame, &frame_dir.join(format!("frame_{f:04}.png")))?;
        }
        let mut csv = String::from("video_id,frame,x,y,subject\n");
        for (f, gaze) in video.fixations.iter().enumerate() {
            for &(x, y, s) in gaze {
                let _ = writeln!(csv, "{},{f},{x},{y},s{s}", video.video_id);
            }
        }
        let fix_path = root.join("fixations").join(format!("{}.csv", video.video_id));
        fs::write(&fix_path, csv).map_err(|e| Error::io(&fix_path, e))?;
        let which = usize::from(i >= train_videos);
        let _ = writeln!(
            manifests[which],
            "{id}\tvideos/{id}\tfixations/{id}.csv\t{}\t{}",
            spec.width,
            spec.height,
            id = video.video_id
        );
        videos.push(video);
    }
    let train_manifest = root.join("train.tsv");
    let test_manifest = root.join("test.tsv");
    fs::write(&train_manifest, &manifests[0]).map_err(|e| Error::io(&train_manifest, e))?;
    fs::write(&test_manifest, &manifests[1]).map_err(|e| Error::io(&test_manifest, e))?;
    Ok(FixturePaths {
        root: root.to_path_buf(),
        train_manifest,
        test_manifest,
        videos,
    })
}

/// Writes the first three channels as an 8-bit RGB PNG.
pub fn write_png(frame: &PlaneStack, path: &Path) -> Result<()> {
    if frame.channels() < 3 {
        return Err(Error::Shape("PNG export needs 3 channels".into()));
    }
    let mut buf = Vec::with_capacity(frame.width() * frame.height() * 3);
    for px in frame.data().chunks_exact(frame.channels()) {
        for &v in &px[..3] {
            buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let img = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, buf)
        .ok_or_else(|| Error::Shape("frame buffer size mismatch".into()))?;
    img.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
