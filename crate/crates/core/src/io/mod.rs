//! Loading and storing everything the pipeline touches on disk.

mod checkpoint;
mod fixations;
mod fmap;
mod frames;
mod manifest;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_model, save_checkpoint, save_model, Checkpoint};
pub use fixations::{load_fixations, Fixation, FixationBounds, FixationLog};
pub use fmap::{decode_plane_stack, encode_plane_stack, read_map_file, read_pgm, read_plane_stack, write_pgm, write_plane_stack, FMAP_MAGIC};
pub use frames::{load_frame_sequence, FrameSequence};
pub use manifest::{load_manifest, parse_manifest, DatasetManifest, ManifestEntry, Split};
