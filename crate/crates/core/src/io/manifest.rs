use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub frame_dir: PathBuf,
    pub fixation_file: PathBuf,
    pub width: usize,
    pub height: usize,
}

/// Tab-separated list of videos: `video_id  frame_dir  fixation_csv  W  H`.
///
/// Blank lines and lines starting with `#` are ignored. A two-field line
/// `split<TAB>train|test` sets the split. Relative paths resolve against the
/// manifest's own directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub split: Split,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest::default();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            ["split", value] => {
                manifest.split = match value.trim() {
                    "train" => Split::Train,
                    "test" => Split::Test,
                    other => {
                        return Err(Error::Row {
                            row,
                            message: format!("unknown split {other:?}"),
                        })
                    }
                }
            }
            [video_id, frame_dir, fixation_file, w, h] => {
                let parse = |s: &str, what: &str| {
                    s.trim().parse::<usize>().map_err(|_| Error::Row {
                        row,
                        message: format!("bad {what} {s:?}"),
                    })
                };
                let entry = ManifestEntry {
                    video_id: video_id.trim().to_string(),
                    frame_dir: base.join(frame_dir.trim()),
                    fixation_file: base.join(fixation_file.trim()),
                    width: parse(w, "width")?,
                    height: parse(h, "height")?,
                };
                if !seen.insert(entry.video_id.clone()) {
                    return Err(Error::Row {
                        row,
                        message: format!("duplicate video_id {}", entry.video_id),
                    });
                }
                manifest.entries.push(entry);
            }
            _ => {
                return Err(Error::Row {
                    row,
                    message: format!("expected 5 tab-separated fields, got {}", fields.len()),
                })
            }
        }
    }
    Ok(manifest)
}

/// Reads and validates a manifest; every referenced path must exist.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let manifest = parse_manifest(&text, base)?;
    for e in &manifest.entries {
        for p in [&e.frame_dir, &e.fixation_file] {
            if !p.exists() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced path missing"),
                ));
            }
        }
    }
    Ok(manifest)
}
