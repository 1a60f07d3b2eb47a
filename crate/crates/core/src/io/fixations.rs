use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Fixation {
    pub video_id: String,
    #[serde(rename = "frame")]
    pub frame_index: usize,
    pub x: usize,
    pub y: usize,
    #[serde(rename = "subject")]
    pub subject_id: String,
}

/// Bounds every fixation row must respect.
#[derive(Debug, Clone, Copy)]
pub struct FixationBounds {
    pub width: usize,
    pub height: usize,
    pub frame_count: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixationLog {
    pub records: Vec<Fixation>,
}

impl FixationLog {
    /// Fixation points `(x, y)` recorded on one frame, in file order.
    pub fn points_for(&self, video_id: &str, frame_index: usize) -> Vec<(usize, usize)> {
        self.records
            .iter()
            .filter(|r| r.frame_index == frame_index && r.video_id == video_id)
            .map(|r| (r.x, r.y))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

const HEADER: [&str; 5] = ["video_id", "frame", "x", "y", "subject"];

/// Parses a `video_id,frame,x,y,subject` CSV. Row numbers in errors count
/// the header as row 1.
pub fn load_fixations(path: &Path, bounds: FixationBounds) -> Result<FixationLog> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Row {
            row: 1,
            message: format!("expected header {}", HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<Fixation>().enumerate() {
        let row_no = i + 2;
        let rec = row.map_err(|e| Error::Row {
            row: row_no,
            message: format!("malformed row: {e}"),
        })?;
        if rec.x >= bounds.width || rec.y >= bounds.height {
            return Err(Error::Row {
                row: row_no,
                message: format!(
                    "fixation ({}, {}) outside {}x{} frame",
                    rec.x, rec.y, bounds.width, bounds.height
                ),
            });
        }
        if let Some(n) = bounds.frame_count {
            if rec.frame_index >= n {
                return Err(Error::Row {
                    row: row_no,
                    message: format!("frame {} beyond sequence of {n}", rec.frame_index),
                });
            }
        }
        records.push(rec);
    }
    Ok(FixationLog { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::io::Write;

    fn bounds(w: usize, h: usize) -> FixationBounds {
        FixationBounds {
            width: w,
            height: h,
            frame_count: None,
        }
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "video_id,frame,x,y,subject\n{body}").unwrap();
        f
    }

    #[test]
    fn single_row() {
        let f = write_csv("v1,0,10,12,s1\n");
        let log = load_fixations(f.path(), bounds(64, 64)).unwrap();
        assert_eq!(
            log.records,
            vec![Fixation {
                video_id: "v1".into(),
                frame_index: 0,
                x: 10,
                y: 12,
                subject_id: "s1".into()
            }]
        );
    }

    #[test]
    fn x_equal_width_names_row_two() {
        let f = write_csv("v1,0,64,12,s1\n");
        let err = load_fixations(f.path(), bounds(64, 64)).unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
    }

    #[test]
    fn malformed_row() {
        let f = write_csv("v1,0,1,1,s1\nv1,zero,1,1,s1\n");
        let err = load_fixations(f.path(), bounds(64, 64)).unwrap_err();
        assert!(matches!(err, Error::Row { row: 3, .. }), "{err}");
    }

    #[test]
    fn frame_beyond_sequence() {
        let f = write_csv("v1,5,1,1,s1\n");
        let b = FixationBounds {
            frame_count: Some(5),
            ..bounds(8, 8)
        };
        assert!(load_fixations(f.path(), b).is_err());
    }

    #[test]
    fn random_rows_preserve_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut body = String::new();
        let mut expected = Vec::new();
        for i in 0..200 {
            let (x, y, fr) = (rng.random_range(0..320), rng.random_range(0..240), rng.random_range(0..50));
            body.push_str(&format!("v{},{fr},{x},{y},s{}\n", i % 3, i % 7));
            expected.push((x, y, fr));
        }
        let f = write_csv(&body);
        let log = load_fixations(f.path(), bounds(320, 240)).unwrap();
        assert_eq!(log.len(), 200);
        let got: Vec<_> = log.records.iter().map(|r| (r.x, r.y, r.frame_index)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn points_for_filters_video_and_frame() {
        let f = write_csv("a,0,1,1,s1\nb,0,2,2,s1\na,1,3,3,s1\na,0,4,4,s2\n");
        let log = load_fixations(f.path(), bounds(8, 8)).unwrap();
        assert_eq!(log.points_for("a", 0), vec![(1, 1), (4, 4)]);
    }
}
