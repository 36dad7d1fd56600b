//! On-disk formats: the `RTN1` tensor container, binary PGM images, and
//! binary PPM color overlays.
//!
//! `RTN1` layout, all integers little-endian:
//!
//! ```text
//! bytes 0..4   magic "RTN1"
//! byte  4      dtype (0 = f32, little-endian)
//! byte  5      rank  (always 4)
//! bytes 6..22  dims as 4 x u32: B, C, H, W
//! bytes 22..   payload, B*C*H*W * 4 bytes of f32
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{LabelMap, Shape, Tensor};

const MAGIC: &[u8; 4] = b"RTN1";
const DTYPE_F32: u8 = 0;
const RANK: u8 = 4;

/// Writes a tensor to `path` in the `RTN1` container format.
pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let s = t.shape();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut header = Vec::with_capacity(22);
    header.extend_from_slice(MAGIC);
    header.push(DTYPE_F32);
    header.push(RANK);
    for dim in [s.b, s.c, s.h, s.w] {
        let dim = u32::try_from(dim)
            .map_err(|_| Error::format(path, format!("dimension {dim} exceeds u32")))?;
        header.extend_from_slice(&dim.to_le_bytes());
    }
    w.write_all(&header).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(t.data().len() * 4);
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a tensor from an `RTN1` file, validating magic, dtype, rank, and
/// payload length.
pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 22];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header (need 22 bytes)"))?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected \"RTN1\""));
    }
    if header[4] != DTYPE_F32 {
        return Err(Error::format(
            path,
            format!("unsupported dtype {}, expected 0 (f32)", header[4]),
        ));
    }
    if header[5] != RANK {
        return Err(Error::format(
            path,
            format!("unsupported rank {}, expected 4", header[5]),
        ));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        let off = 6 + 4 * i;
        *d = u32::from_le_bytes(header[off..off + 4].try_into().unwrap()) as usize;
    }
    let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| Error::io(path, e))?;
    let expected = shape.len() * 4;
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes, shape {shape} needs {expected}",
                payload.len()
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_vec(shape, data))
}

/// Writes an 8-bit grayscale image as binary PGM (`P5`, maxval 255).
pub fn write_pgm(path: &Path, h: usize, w: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != h * w {
        return Err(Error::format(
            path,
            format!("pixel buffer is {} bytes, {w}x{h} needs {}", pixels.len(), h * w),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P5\n{w} {h}\n255\n").map_err(|e| Error::io(path, e))?;
    out.write_all(pixels).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a binary PGM (`P5`) image, returning `(height, width, pixels)`.
/// Maxval must be 255; `#` comments in the header are skipped.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;

    let mut next_token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and # comment lines
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    if next_token(&bytes)? != "P5" {
        return Err(Error::format(path, "not a binary PGM (missing P5 magic)"));
    }
    let w: usize = next_token(&bytes)?
        .parse()
        .map_err(|_| Error::format(path, "invalid PGM width"))?;
    let h: usize = next_token(&bytes)?
        .parse()
        .map_err(|_| Error::format(path, "invalid PGM height"))?;
    let maxval: usize = next_token(&bytes)?
        .parse()
        .map_err(|_| Error::format(path, "invalid PGM maxval"))?;
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("unsupported PGM maxval {maxval}, expected 255"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if bytes.len() < pos || bytes.len() - pos < h * w {
        return Err(Error::format(
            path,
            format!("PGM raster truncated: need {} bytes", h * w),
        ));
    }
    Ok((h, w, bytes[pos..pos + h * w].to_vec()))
}

/// Writes an RGB image as binary PPM (`P6`, maxval 255). `pixels` is
/// row-major `[r, g, b]` triplets.
pub fn write_ppm(path: &Path, h: usize, w: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != h * w * 3 {
        return Err(Error::format(
            path,
            format!(
                "pixel buffer is {} bytes, {w}x{h} RGB needs {}",
                pixels.len(),
                h * w * 3
            ),
        ));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write!(out, "P6\n{w} {h}\n255\n").map_err(|e| Error::io(path, e))?;
    out.write_all(pixels).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Loads a grayscale PGM as a `(1, 1, H, W)` tensor scaled to `[0, 1]`.
pub fn read_pgm_tensor(path: &Path) -> Result<Tensor> {
    let (h, w, pixels) = read_pgm(path)?;
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Ok(Tensor::from_vec(Shape::new(1, 1, h, w), data))
}

/// Loads a PGM whose pixel values are class ids (not intensities).
pub fn read_pgm_labels(path: &Path, num_classes: usize) -> Result<LabelMap> {
    let (h, w, pixels) = read_pgm(path)?;
    if let Some(&bad) = pixels.iter().find(|&&p| p as usize >= num_classes) {
        return Err(Error::format(
            path,
            format!("label value {bad} out of range (classes 0..{num_classes})"),
        ));
    }
    Ok(LabelMap::new(h, w, pixels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn tensor_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rtn1");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = Tensor::from_fn(Shape::new(2, 3, 5, 7), |_, _, _, _| {
            rng.random_range(-100.0f32..100.0)
        });
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        // bit-exact, including any negative zeros
        let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn tensor_header_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rtn1");
        let t = Tensor::filled(Shape::new(1, 2, 3, 4), 0.5);
        write_tensor(&path, &t).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[0..4], b"RTN1");
        assert_eq!(bytes[4], 0); // f32
        assert_eq!(bytes[5], 4); // rank
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[14..18].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[18..22].try_into().unwrap()), 4);
        assert_eq!(bytes.len(), 22 + 24 * 4);
    }

    #[test]
    fn tensor_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.rtn1");
        let t = Tensor::filled(Shape::new(1, 1, 2, 2), 1.0);
        write_tensor(&path, &t).unwrap();

        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        let err = read_tensor(&path).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
        assert!(err.contains("t.rtn1"), "error should name the file: {err}");

        let mut truncated = good.clone();
        truncated.truncate(good.len() - 4);
        std::fs::write(&path, &truncated).unwrap();
        let err = read_tensor(&path).unwrap_err().to_string();
        assert!(err.contains("payload"), "{err}");

        let mut bad_dtype = good.clone();
        bad_dtype[4] = 9;
        std::fs::write(&path, &bad_dtype).unwrap();
        let err = read_tensor(&path).unwrap_err().to_string();
        assert!(err.contains("dtype"), "{err}");
    }

    #[test]
    fn pgm_roundtrip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let pixels: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
        write_pgm(&path, 3, 4, &pixels).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n4 3\n255\n"));
        let (h, w, back) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (3, 4));
        assert_eq!(back, pixels);
    }

    #[test]
    fn pgm_reader_skips_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let mut bytes = b"P5\n# a comment\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40]);
        std::fs::write(&path, &bytes).unwrap();
        let (h, w, pixels) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (2, 2));
        assert_eq!(pixels, vec![10, 20, 30, 40]);
    }

    #[test]
    fn label_pgm_range_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.pgm");
        write_pgm(&path, 1, 3, &[0, 9, 10]).unwrap();
        assert!(read_pgm_labels(&path, 10).is_err());
        write_pgm(&path, 1, 3, &[0, 5, 9]).unwrap();
        let lm = read_pgm_labels(&path, 10).unwrap();
        assert_eq!(lm.data, vec![0, 5, 9]);
    }

    #[test]
    fn ppm_header_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let pixels = vec![255u8; 2 * 2 * 3];
        write_ppm(&path, 2, 2, &pixels).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 12);
        assert!(write_ppm(&path, 2, 2, &[0u8; 5]).is_err());
    }
}
