//! ETDRS 9-zone thickness grid: total retinal thickness averaged over a
//! central disc, an inner ring, and an outer ring, the rings split into
//! quadrants by the ±45° diagonals. Zone 1 is the central disc; zones
//! 2–5 are the inner ring and 6–9 the outer ring, each ordered top,
//! right, bottom, left (the azimuthal/frame axis pointing "up").

use super::ThicknessProfile;
use crate::error::{Error, Result};

/// Physical layout of a laterally-ordered frame stack around the fovea.
#[derive(Debug, Clone, PartialEq)]
pub struct EtdrsSpec {
    /// Index of the frame crossing the fovea center.
    pub fovea_frame: usize,
    /// Lateral resolution, micrometers per image column.
    pub lateral_um_per_px: f64,
    /// Azimuthal spacing between consecutive frames, micrometers.
    pub azimuthal_um_per_frame: f64,
    /// Diameters of the central disc, inner ring, and outer ring, in mm.
    pub ring_diameters_mm: [f64; 3],
}

impl Default for EtdrsSpec {
    fn default() -> EtdrsSpec {
        EtdrsSpec {
            fovea_frame: 5,
            lateral_um_per_px: 11.4,
            azimuthal_um_per_frame: 122.0,
            ring_diameters_mm: [1.0, 3.0, 6.0],
        }
    }
}

impl EtdrsSpec {
    pub fn with_fovea(fovea_frame: usize) -> EtdrsSpec {
        EtdrsSpec {
            fovea_frame,
            ..EtdrsSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lateral_um_per_px <= 0.0 || self.azimuthal_um_per_frame <= 0.0 {
            return Err(Error::Config("grid resolutions must be positive".into()));
        }
        let [d1, d3, d6] = self.ring_diameters_mm;
        if !(0.0 < d1 && d1 < d3 && d3 < d6) {
            return Err(Error::Config(
                "ring diameters must be positive and increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Zone index 0..9 for a physical offset from the fovea center, or `None`
/// outside the outer ring. Ring boundaries are half-open (a sample on a
/// boundary belongs to the outer of the two zones), as are the ±45°
/// diagonals.
fn zone_of(x_mm: f64, y_mm: f64, spec: &EtdrsSpec) -> Option<usize> {
    let r = x_mm.hypot(y_mm);
    let [d1, d3, d6] = spec.ring_diameters_mm;
    let ring = if r < d1 / 2.0 {
        return Some(0);
    } else if r < d3 / 2.0 {
        0
    } else if r < d6 / 2.0 {
        1
    } else {
        return None;
    };
    let deg = y_mm.atan2(x_mm).to_degrees();
    let quadrant = if (45.0..135.0).contains(&deg) {
        0 // top
    } else if (-45.0..45.0).contains(&deg) {
        1 // right
    } else if (-135.0..-45.0).contains(&deg) {
        2 // bottom
    } else {
        3 // left
    };
    Some(1 + ring * 4 + quadrant)
}

/// Mean total retinal thickness (pixels) per ETDRS zone, given one
/// thickness profile per frame in lateral order. A zone no sample falls
/// into is `None`, never zero.
pub fn etdrs_grid(
    profiles: &[ThicknessProfile],
    spec: &EtdrsSpec,
) -> Result<[Option<f64>; 9]> {
    spec.validate()?;
    if profiles.is_empty() {
        return Err(Error::Data("no frames to place on the grid".into()));
    }
    if spec.fovea_frame >= profiles.len() {
        return Err(Error::Config(format!(
            "foveal frame {} outside the {}-frame stack",
            spec.fovea_frame,
            profiles.len()
        )));
    }
    let width = profiles[0].width();
    if profiles.iter().any(|p| p.width() != width) {
        return Err(Error::Data("frames differ in width".into()));
    }
    if width == 0 {
        return Err(Error::Data("frames have no columns".into()));
    }

    let cx = (width as f64 - 1.0) / 2.0;
    let mut sum = [0.0f64; 9];
    let mut n = [0usize; 9];
    for (f, profile) in profiles.iter().enumerate() {
        let y_mm = (f as f64 - spec.fovea_frame as f64) * spec.azimuthal_um_per_frame / 1000.0;
        for x in 0..width {
            let x_mm = (x as f64 - cx) * spec.lateral_um_per_px / 1000.0;
            if let Some(z) = zone_of(x_mm, y_mm, spec) {
                sum[z] += profile.total_retina(x) as f64;
                n[z] += 1;
            }
        }
    }
    let mut zones = [None; 9];
    for z in 0..9 {
        if n[z] > 0 {
            zones[z] = Some(sum[z] / n[z] as f64);
        }
    }
    Ok(zones)
}
