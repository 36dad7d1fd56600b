//! On-disk dataset layout: a `manifest.tsv` with one
//! `subject_id<TAB>frame_id<TAB>image_path<TAB>label_path` line per scan,
//! paths relative to the dataset directory. Images are 8-bit grayscale
//! PGM or RTN1 tensors; labels are PGM whose pixel values are class ids.
//! The label column may be omitted for inference-only inputs; such lines
//! load through [`load_scan_images`] but are rejected where ground truth
//! is required.

use std::fs;
use std::path::{Path, PathBuf};

use super::{BScan, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::io::{read_pgm_labels, read_pgm_tensor, read_tensor, write_pgm};
use crate::tensor::Tensor;

pub const MANIFEST_NAME: &str = "manifest.tsv";

struct ManifestRow {
    subject_id: u32,
    frame_id: u32,
    image_path: PathBuf,
    label_path: Option<PathBuf>,
}

fn manifest_rows(dir: &Path) -> Result<Vec<ManifestRow>> {
    let manifest = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(Error::format(
                &manifest,
                format!(
                    "line {}: expected 3 or 4 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                ),
            ));
        }
        let parse_id = |s: &str, what: &str| {
            s.parse::<u32>().map_err(|_| {
                Error::format(
                    &manifest,
                    format!("line {}: bad {what} {s:?}", lineno + 1),
                )
            })
        };
        rows.push(ManifestRow {
            subject_id: parse_id(fields[0], "subject id")?,
            frame_id: parse_id(fields[1], "frame id")?,
            image_path: dir.join(fields[2]),
            label_path: fields.get(3).map(|f| dir.join(f)),
        });
    }
    Ok(rows)
}

fn load_image(path: &Path) -> Result<Tensor> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("rtn1") => {
            let t = read_tensor(path)?;
            let s = t.shape();
            if s.b != 1 || s.c != 1 {
                return Err(Error::format(
                    path,
                    format!("scan image must be (1,1,H,W), got {s}"),
                ));
            }
            Ok(t)
        }
        _ => read_pgm_tensor(path),
    }
}

/// Loads every scan listed in a dataset directory's manifest, in manifest
/// order. An empty manifest yields an empty list; a scan without a label
/// column is an error here.
pub fn load_dataset(dir: &Path) -> Result<Vec<BScan>> {
    let mut scans = Vec::new();
    for row in manifest_rows(dir)? {
        let label_path = row.label_path.ok_or_else(|| {
            Error::Data(format!(
                "{}: scan s{:02}_f{:02} has no label column; labeled data is required here",
                dir.join(MANIFEST_NAME).display(),
                row.subject_id,
                row.frame_id
            ))
        })?;
        let image = load_image(&row.image_path)?;
        let labels = read_pgm_labels(&label_path, NUM_CLASSES)?;
        let s = image.shape();
        if s.h != labels.h || s.w != labels.w {
            return Err(Error::Data(format!(
                "{}: image is {}x{} but {} is {}x{}",
                row.image_path.display(),
                s.h,
                s.w,
                label_path.display(),
                labels.h,
                labels.w
            )));
        }
        scans.push(BScan::new(image, labels, row.subject_id, row.frame_id)?);
    }
    Ok(scans)
}

/// Loads only the images of a manifest — the inference entry point, which
/// must not require ground-truth labels. Returns
/// `(subject_id, frame_id, image)` in manifest order.
pub fn load_scan_images(dir: &Path) -> Result<Vec<(u32, u32, Tensor)>> {
    manifest_rows(dir)?
        .into_iter()
        .map(|row| Ok((row.subject_id, row.frame_id, load_image(&row.image_path)?)))
        .collect()
}

/// Writes scans as PGM pairs plus a manifest into `dir` (created if
/// needed). Image intensities are quantized to 8 bits.
pub fn save_dataset(dir: &Path, scans: &[BScan]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for scan in scans {
        let stem = format!("s{:02}_f{:02}", scan.subject_id, scan.frame_id);
        let image_name = format!("{stem}.pgm");
        let label_name = format!("{stem}_labels.pgm");
        let (h, w) = (scan.height(), scan.width());
        let pixels: Vec<u8> = scan
            .image
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        write_pgm(&dir.join(&image_name), h, w, &pixels)?;
        write_pgm(&dir.join(&label_name), h, w, &scan.labels.data)?;
        manifest.push_str(&format!(
            "{}\t{}\t{image_name}\t{label_name}\n",
            scan.subject_id, scan.frame_id
        ));
    }
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}
