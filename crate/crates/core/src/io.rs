//! Binary file formats.
//!
//! All formats are little-endian: a 4-byte magic, `u32` width, `u32` height,
//! then row-major 32-bit float payload.
//!
//! | magic  | payload per pixel        |
//! |--------|--------------------------|
//! | `CIMG` | interleaved `(re, im)`   |
//! | `MASK` | one `f32`, 0 or 1        |
//! | `DENS` | one `f32` in (0, 1]      |
//!
//! Magnitude and map exports use 8-bit binary PGM (`P5`), linearly scaled so
//! the per-image maximum maps to 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::ComplexImage;
use crate::kspace::{SamplingDensity, SamplingMask};

pub const IMAGE_MAGIC: &[u8; 4] = b"CIMG";
pub const MASK_MAGIC: &[u8; 4] = b"MASK";
pub const DENSITY_MAGIC: &[u8; 4] = b"DENS";

pub fn encode_image(img: &ComplexImage) -> Vec<u8> {
    let mut buf = header(IMAGE_MAGIC, img.width(), img.height(), 8 * img.len());
    for c in img.values() {
        buf.extend_from_slice(&(c.re as f32).to_le_bytes());
        buf.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    buf
}

pub fn decode_image(bytes: &[u8], origin: &Path) -> Result<ComplexImage> {
    let (w, h, payload) = parse_header(bytes, IMAGE_MAGIC, 8, origin)?;
    let values = payload
        .chunks_exact(8)
        .map(|c| Complex64::new(f32_at(c, 0) as f64, f32_at(c, 4) as f64))
        .collect();
    ComplexImage::new(w, h, values).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn encode_mask(mask: &SamplingMask) -> Vec<u8> {
    let mut buf = header(MASK_MAGIC, mask.width(), mask.height(), 4 * mask.pattern().len());
    for &s in mask.pattern() {
        buf.extend_from_slice(&(if s { 1.0f32 } else { 0.0 }).to_le_bytes());
    }
    buf
}

/// The file stores only the pattern; the realized acceleration becomes the
/// nominal one and the seed is zero.
pub fn decode_mask(bytes: &[u8], origin: &Path) -> Result<SamplingMask> {
    let (w, h, payload) = parse_header(bytes, MASK_MAGIC, 4, origin)?;
    let mut pattern = Vec::with_capacity(w * h);
    for c in payload.chunks_exact(4) {
        pattern.push(match f32_at(c, 0) {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => return Err(Error::format(origin, format!("mask entry {v} is not 0 or 1"))),
        });
    }
    let sampled = pattern.iter().filter(|&&s| s).count().max(1);
    let accel = pattern.len() as f64 / sampled as f64;
    SamplingMask::new(w, h, pattern, accel, 0).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn encode_density(density: &SamplingDensity) -> Vec<u8> {
    let probs = density.probabilities();
    let mut buf = header(DENSITY_MAGIC, density.width(), density.height(), 4 * probs.len());
    for &p in probs {
        buf.extend_from_slice(&(p as f32).to_le_bytes());
    }
    buf
}

pub fn decode_density(bytes: &[u8], origin: &Path) -> Result<SamplingDensity> {
    let (w, h, payload) = parse_header(bytes, DENSITY_MAGIC, 4, origin)?;
    let probs = payload.chunks_exact(4).map(|c| f32_at(c, 0) as f64).collect();
    SamplingDensity::new(w, h, probs, 0).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_image(path: impl AsRef<Path>, img: &ComplexImage) -> Result<()> {
    write_atomic(path.as_ref(), &encode_image(img))
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ComplexImage> {
    let path = path.as_ref();
    decode_image(&read(path)?, path)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &SamplingMask) -> Result<()> {
    write_atomic(path.as_ref(), &encode_mask(mask))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    let path = path.as_ref();
    decode_mask(&read(path)?, path)
}

pub fn write_density(path: impl AsRef<Path>, density: &SamplingDensity) -> Result<()> {
    write_atomic(path.as_ref(), &encode_density(density))
}

pub fn read_density(path: impl AsRef<Path>) -> Result<SamplingDensity> {
    let path = path.as_ref();
    decode_density(&read(path)?, path)
}

/// 8-bit PGM of nonnegative values scaled by their maximum. An all-zero map
/// stays black.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    let max = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend(values.iter().map(|&v| {
        if max > 0.0 && v.is_finite() {
            (v.max(0.0) / max * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    buf
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, values: &[f64]) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(width, height, values))
}

pub fn write_magnitude_pgm(path: impl AsRef<Path>, img: &ComplexImage) -> Result<()> {
    write_pgm(path, img.width(), img.height(), &img.magnitudes())
}

pub fn write_json<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path.as_ref(), &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    serde_json::from_slice(&read(path)?).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(magic: &[u8; 4], width: usize, height: usize, payload: usize) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + payload);
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&(width as u32).to_le_bytes());
    buf.extend_from_slice(&(height as u32).to_le_bytes());
    buf
}

fn parse_header<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    bytes_per_pixel: usize,
    origin: &Path,
) -> Result<(usize, usize, &'a [u8])> {
    if bytes.len() < 12 {
        return Err(Error::format(origin, "truncated header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            origin,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = w
        .checked_mul(h)
        .and_then(|n| n.checked_mul(bytes_per_pixel))
        .ok_or_else(|| Error::format(origin, "dimensions overflow"))?;
    let payload = &bytes[12..];
    if payload.len() != expected {
        return Err(Error::format(
            origin,
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    Ok((w, h, payload))
}

fn f32_at(chunk: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(chunk[at..at + 4].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kspace::VdMaskSpec;
    use proptest::prelude::*;

    #[test]
    fn image_header_layout() {
        let img = ComplexImage::new(2, 1, vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 0.0)])
            .unwrap();
        let bytes = encode_image(&img);
        assert_eq!(&bytes[..4], b"CIMG");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.0f32).to_le_bytes());
        assert_eq!(bytes.len(), 12 + 16);
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let img = ComplexImage::zeros(3, 3).unwrap();
        let mut bytes = encode_image(&img);
        let p = Path::new("x.cimg");
        assert!(decode_mask(&bytes, p).is_err());
        bytes.pop();
        assert!(matches!(decode_image(&bytes, p), Err(Error::Format { .. })));
    }

    #[test]
    fn mask_and_density_round_trip() {
        let spec = VdMaskSpec::new(16, 8, 2.0);
        let mask = spec.draw(1).unwrap();
        let back = decode_mask(&encode_mask(&mask), Path::new("m")).unwrap();
        assert_eq!(back.pattern(), mask.pattern());
        let d = spec.estimate_density(4, 2).unwrap();
        let back = decode_density(&encode_density(&d), Path::new("d")).unwrap();
        for (a, b) in back.probabilities().iter().zip(d.probabilities()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn pgm_scaling() {
        let bytes = encode_pgm(3, 1, &[0.0, 1.0, 2.0]);
        let header = b"P5\n3 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0, 128, 255]);
        let zeros = encode_pgm(2, 1, &[0.0, 0.0]);
        assert_eq!(&zeros[zeros.len() - 2..], &[0, 0]);
    }

    #[test]
    fn atomic_write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/img.cimg");
        let img = ComplexImage::from_fn(4, 3, |r, c| Complex64::new(r as f64, -(c as f64))).unwrap();
        write_image(&path, &img).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
        assert!(!dir.path().join("nested/img.cimg.tmp").exists());
    }

    proptest! {
        #[test]
        fn image_round_trip_is_f32_exact(
            w in 1usize..6, h in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut r = crate::rng::seeded(seed);
            let img = ComplexImage::from_fn(w, h, |_, _| {
                let re = crate::rng::standard_normal(&mut r) as f32 as f64;
                let im = crate::rng::standard_normal(&mut r) as f32 as f64;
                Complex64::new(re, im)
            }).unwrap();
            let back = decode_image(&encode_image(&img), Path::new("p")).unwrap();
            prop_assert_eq!(back, img);
        }
    }
}
