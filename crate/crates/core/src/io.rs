//! Image file I/O.
//!
//! RAW format ("DBIM"): 16-byte header — magic, then width, height, channels
//! as u32 little-endian — followed by width*height*channels IEEE-754 binary32
//! little-endian samples, row-major, channel-interleaved. Round-trips are
//! bit-exact.
//!
//! PGM/PPM exports are binary P5/P6 with maxval 255 for human viewing.

use crate::error::{Error, Result};
use crate::image::Image;
use std::path::Path;

pub const RAW_MAGIC: &[u8; 4] = b"DBIM";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedFile {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn raw_bytes(img: &Image) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + img.sample_count() * 4);
    buf.extend_from_slice(RAW_MAGIC);
    buf.extend_from_slice(&(img.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(img.height() as u32).to_le_bytes());
    buf.extend_from_slice(&(img.channels() as u32).to_le_bytes());
    for s in img.data() {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    buf
}

pub fn save_raw(img: &Image, path: &Path) -> Result<()> {
    std::fs::write(path, raw_bytes(img)).map_err(io_err(path))
}

pub fn load_raw(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    parse_raw(&bytes, path)
}

pub fn parse_raw(bytes: &[u8], path: &Path) -> Result<Image> {
    if bytes.len() < 16 {
        return Err(malformed(path, "header shorter than 16 bytes"));
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(malformed(path, "magic mismatch"));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height, channels) = (field(4), field(8), field(12));
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| malformed(path, "dimension overflow"))?;
    let payload = &bytes[16..];
    if payload.len() < expected {
        return Err(malformed(path, "truncated payload"));
    }
    if payload.len() > expected {
        return Err(malformed(path, "trailing bytes after payload"));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = data.iter().position(|s| !s.is_finite()) {
        return Err(malformed(path, format!("non-finite sample at index {i}")));
    }
    Image::new(width, height, channels, data)
}

/// Map a sample to the 8-bit export value: clamp to [0,1], scale by 255,
/// round half away from zero.
pub fn quantize8(sample: f32) -> u8 {
    (f64::from(sample).clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PGM (P5) export for single-channel images.
pub fn save_pgm8(img: &Image, path: &Path) -> Result<()> {
    if img.channels() != 1 {
        return Err(Error::InvalidImage(format!(
            "PGM export requires 1 channel, got {}; use PPM for color",
            img.channels()
        )));
    }
    let mut buf = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    buf.extend(img.data().iter().map(|&s| quantize8(s)));
    std::fs::write(path, buf).map_err(io_err(path))
}

/// Binary PPM (P6) export for 3-channel images, same sample mapping.
pub fn save_ppm8(img: &Image, path: &Path) -> Result<()> {
    if img.channels() != 3 {
        return Err(Error::InvalidImage(format!(
            "PPM export requires 3 channels, got {}",
            img.channels()
        )));
    }
    let mut buf = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    buf.extend(img.data().iter().map(|&s| quantize8(s)));
    std::fs::write(path, buf).map_err(io_err(path))
}

/// Export through PGM or PPM depending on channel count.
pub fn save_view8(img: &Image, path: &Path) -> Result<()> {
    if img.channels() == 1 {
        save_pgm8(img, path)
    } else {
        save_ppm8(img, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn raw_bytes_match_hand_assembled_fixture() {
        // 2x2x1 image with samples 0.0, 0.25, 0.5, 1.0: 16-byte header
        // plus 16 payload bytes, assembled here independently.
        let img = Image::new(2, 2, 1, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"DBIM");
        expected.extend_from_slice(&[2, 0, 0, 0]);
        expected.extend_from_slice(&[2, 0, 0, 0]);
        expected.extend_from_slice(&[1, 0, 0, 0]);
        expected.extend_from_slice(&[0x00, 0x00, 0x00, 0x00]); // 0.0
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3E]); // 0.25
        expected.extend_from_slice(&[0x00, 0x00, 0x00, 0x3F]); // 0.5
        expected.extend_from_slice(&[0x00, 0x00, 0x80, 0x3F]); // 1.0
        assert_eq!(raw_bytes(&img), expected);
        assert_eq!(expected.len(), 32);
    }

    #[test]
    fn raw_roundtrip_is_byte_identical() {
        let dir = tmp();
        let path = dir.path().join("x.dbim");
        let rng = CounterRng::new(77);
        let data: Vec<f32> = (0..5 * 4 * 3)
            .map(|i| (rng.unit_at(i as u64) * 2.0 - 0.5) as f32)
            .collect();
        let img = Image::new(5, 4, 3, data).unwrap();
        save_raw(&img, &path).unwrap();
        let back = load_raw(&path).unwrap();
        assert_eq!(img, back);
        // and the file bytes re-serialize identically
        assert_eq!(std::fs::read(&path).unwrap(), raw_bytes(&back));
    }

    #[test]
    fn raw_rejects_magic_mismatch() {
        let dir = tmp();
        let path = dir.path().join("bad.dbim");
        let mut bytes = raw_bytes(&Image::zeros(2, 2, 1));
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = load_raw(&path).unwrap_err();
        assert!(err.to_string().contains("magic mismatch"), "{err}");
    }

    #[test]
    fn raw_rejects_truncation_and_trailing() {
        let dir = tmp();
        let bytes = raw_bytes(&Image::zeros(2, 2, 1));

        let short = dir.path().join("short.dbim");
        std::fs::write(&short, &bytes[..bytes.len() - 1]).unwrap();
        assert!(load_raw(&short)
            .unwrap_err()
            .to_string()
            .contains("truncated"));

        let long = dir.path().join("long.dbim");
        let mut extended = bytes.clone();
        extended.push(0);
        std::fs::write(&long, &extended).unwrap();
        assert!(load_raw(&long)
            .unwrap_err()
            .to_string()
            .contains("trailing"));
    }

    #[test]
    fn raw_rejects_nonfinite_payload() {
        let dir = tmp();
        let path = dir.path().join("nan.dbim");
        let mut bytes = raw_bytes(&Image::zeros(1, 1, 1));
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_raw(&path)
            .unwrap_err()
            .to_string()
            .contains("non-finite"));
    }

    #[test]
    fn pgm_constant_half_rounds_half_away() {
        let dir = tmp();
        let path = dir.path().join("half.pgm");
        save_pgm8(&Image::constant(3, 2, 1, 0.5), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let payload = &bytes[bytes.len() - 6..];
        assert!(payload.iter().all(|&b| b == 128), "{payload:?}");
    }

    #[test]
    fn pgm_clamps_out_of_range() {
        let dir = tmp();
        let path = dir.path().join("hot.pgm");
        save_pgm8(&Image::constant(2, 2, 1, 1.2), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes[bytes.len() - 4..].iter().all(|&b| b == 255));
    }

    #[test]
    fn pgm_single_zero_pixel() {
        let dir = tmp();
        let path = dir.path().join("zero.pgm");
        save_pgm8(&Image::zeros(1, 1, 1), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes, b"P5\n1 1\n255\n\x00");
    }

    #[test]
    fn pgm_rejects_color_ppm_accepts() {
        let dir = tmp();
        let img = Image::constant(2, 2, 3, 0.25);
        assert!(save_pgm8(&img, &dir.path().join("c.pgm")).is_err());
        save_ppm8(&img, &dir.path().join("c.ppm")).unwrap();
        let bytes = std::fs::read(dir.path().join("c.ppm")).unwrap();
        assert_eq!(&bytes[..2], b"P6");
        assert!(bytes[bytes.len() - 12..].iter().all(|&b| b == 64));
    }

    #[test]
    fn quantization_is_monotone() {
        let mut prev = 0u8;
        let mut s = -0.25f32;
        while s <= 1.25 {
            let q = quantize8(s);
            assert!(q >= prev);
            prev = q;
            s += 1.0 / 1024.0;
        }
    }

    proptest! {
        #[test]
        fn raw_roundtrip_property(w in 1usize..8, h in 1usize..8, seed in 0u64..1000) {
            let rng = CounterRng::new(seed);
            let data: Vec<f32> = (0..w * h)
                .map(|i| (rng.unit_at(i as u64) * 4.0 - 2.0) as f32)
                .collect();
            let img = Image::new(w, h, 1, data).unwrap();
            let dir = tmp();
            let path = dir.path().join("p.dbim");
            save_raw(&img, &path).unwrap();
            prop_assert_eq!(load_raw(&path).unwrap(), img);
        }
    }
}
