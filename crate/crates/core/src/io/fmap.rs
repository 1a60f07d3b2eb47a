//! FMAP binary maps and 8-bit PGM export.
//!
//! FMAP layout, little-endian: `b"FMAP"`, width, height, channels as `u32`,
//! then `width*height*channels` `f32` values row-major with channels
//! interleaved.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::plane::PlaneStack;

pub const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const HEADER_LEN: usize = 16;

pub fn encode_plane_stack(stack: &PlaneStack) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + stack.data().len() * 4);
    buf.extend_from_slice(FMAP_MAGIC);
    for dim in [stack.width(), stack.height(), stack.channels()] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in stack.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub fn decode_plane_stack(bytes: &[u8]) -> Result<PlaneStack> {
    if bytes.len() < 4 || &bytes[..4] != FMAP_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format("truncated header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (w, h, c) = (dim(0), dim(1), dim(2));
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * 4 {
        return Err(Error::Format(format!(
            "truncated payload: expected {} bytes, found {}",
            n * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
        .collect();
    PlaneStack::from_vec(w, h, c, data)
}

/// Values are stored as `f32`; stacks whose values are representable in
/// `f32` round-trip bit-exactly.
pub fn write_plane_stack(stack: &PlaneStack, path: &Path) -> Result<()> {
    fs::write(path, encode_plane_stack(stack)).map_err(|e| Error::io(path, e))
}

pub fn read_plane_stack(path: &Path) -> Result<PlaneStack> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_plane_stack(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes channel 0 as binary PGM, clamping to [0,1].
pub fn write_pgm(stack: &PlaneStack, path: &Path) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n255\n", stack.width(), stack.height()).into_bytes();
    buf.extend(
        stack
            .channel(0)
            .into_iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads any grayscale PGM as a single channel in [0,1].
pub fn read_pgm(path: &Path) -> Result<PlaneStack> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gray = img.to_luma32f();
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(f64::from).collect();
    PlaneStack::from_plane(w as usize, h as usize, data)
}

/// Reads a single-channel map from either format, chosen by extension.
pub fn read_map_file(path: &Path) -> Result<PlaneStack> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") | Some("pnm") | Some("png") => read_pgm(path),
        _ => read_plane_stack(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.fmap");
        let s = PlaneStack::from_plane(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        write_plane_stack(&s, &p).unwrap();
        assert_eq!(read_plane_stack(&p).unwrap(), s);
    }

    #[test]
    fn header_layout() {
        let s = PlaneStack::from_vec(3, 1, 2, vec![0.5; 6]).unwrap();
        let b = encode_plane_stack(&s);
        assert_eq!(&b[..4], b"FMAP");
        assert_eq!(&b[4..16], &[3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(&b[16..20], &0.5f32.to_le_bytes());
        assert_eq!(b.len(), 16 + 6 * 4);
    }

    #[test]
    fn bad_magic() {
        let mut b = encode_plane_stack(&PlaneStack::zeros(1, 1, 1));
        b[0] = b'X';
        let err = decode_plane_stack(&b).unwrap_err();
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn truncated_payload() {
        let b = encode_plane_stack(&PlaneStack::zeros(4, 4, 1));
        let err = decode_plane_stack(&b[..b.len() - 3]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
    }

    #[test]
    fn pgm_export_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let s = PlaneStack::from_plane(2, 1, vec![0.0, 1.0]).unwrap();
        write_pgm(&s, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n255\n"));
        assert_eq!(&bytes[bytes.len() - 2..], &[0, 255]);
        assert_eq!(read_pgm(&p).unwrap().data(), &[0.0, 1.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn f32_values_round_trip_bit_exact(
            w in 1usize..6, h in 1usize..6, c in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..w * h * c)
                .map(|_| f64::from(f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff)))
                .collect();
            let s = PlaneStack::from_vec(w, h, c, data).unwrap();
            let back = decode_plane_stack(&encode_plane_stack(&s)).unwrap();
            let bits = |p: &PlaneStack| p.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&s));
            prop_assert_eq!((back.width(), back.height(), back.channels()), (w, h, c));
        }
    }
}
