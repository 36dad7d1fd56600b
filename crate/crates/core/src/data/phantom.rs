//! Synthetic layered-retina phantom generator: stacked horizontal bands
//! for the nine anatomical classes with smooth sinusoidal boundary
//! perturbations, optional elliptical fluid pockets inside ONL-ISM, and
//! speckle-like multiplicative noise. Every phantom comes with its exact
//! label map, so desk-scale training and metric checks need no external
//! data.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use super::{BScan, CLASS_FLUID, CLASS_ONL_ISM, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::{LabelMap, Shape, Tensor};

/// Height fraction of each band above the bottom background region, in
/// class order 0..=7; the region below the RPE takes the remainder.
const BAND_FRACTIONS: [f64; 8] = [0.22, 0.035, 0.10, 0.055, 0.055, 0.16, 0.05, 0.055];

/// Everything that determines one phantom, including its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    /// Mean intensity per class id (fluid is index 9).
    pub intensities: [f32; NUM_CLASSES],
    /// Standard deviation of the multiplicative noise.
    pub noise_sigma: f32,
    /// Peak boundary displacement in pixels; 0 gives flat bands.
    pub boundary_amplitude: f32,
    /// Sine periods across the scan width.
    pub boundary_periods: f32,
    /// Inclusive range for the number of fluid pockets.
    pub fluid_count: (usize, usize),
    /// Inclusive range for the pockets' semi-axes, in pixels.
    pub fluid_radius: (f32, f32),
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> PhantomSpec {
        PhantomSpec {
            height: 512,
            width: 256,
            intensities: [0.05, 0.75, 0.45, 0.28, 0.50, 0.20, 0.80, 0.62, 0.08, 0.05],
            noise_sigma: 0.05,
            boundary_amplitude: 3.0,
            boundary_periods: 1.5,
            fluid_count: (0, 2),
            fluid_radius: (4.0, 12.0),
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config("phantom dimensions must be positive".into()));
        }
        if self.intensities.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Config(
                "phantom intensities must lie in [0, 1]".into(),
            ));
        }
        if self.noise_sigma < 0.0 || self.boundary_amplitude < 0.0 || self.boundary_periods < 0.0 {
            return Err(Error::Config(
                "phantom noise, amplitude, and periods must be non-negative".into(),
            ));
        }
        if self.fluid_count.0 > self.fluid_count.1 {
            return Err(Error::Config("fluid count range is inverted".into()));
        }
        if !(self.fluid_radius.0 > 0.0 && self.fluid_radius.0 <= self.fluid_radius.1) {
            return Err(Error::Config("fluid radius range is invalid".into()));
        }
        // every band must survive the worst-case sine displacement with at
        // least one row left per column
        let rows = band_rows(self.height);
        let margin = 2.0 * self.boundary_amplitude + 1.0;
        for j in 0..NUM_CLASSES - 1 {
            let thickness = rows[j + 1] - rows[j];
            if (thickness as f32) < margin {
                return Err(Error::Config(format!(
                    "phantom height {} leaves band {j} only {thickness} px thick; \
                     needs at least {margin} for boundary amplitude {}",
                    self.height, self.boundary_amplitude
                )));
            }
        }
        Ok(())
    }
}

/// Base (unperturbed) band boundaries for a given scan height: band `j`
/// occupies rows `[rows[j], rows[j+1])` for classes `j = 0..=8`.
pub fn band_rows(height: usize) -> [usize; 10] {
    let mut rows = [0usize; 10];
    let mut cum = 0.0f64;
    for (j, frac) in BAND_FRACTIONS.iter().enumerate() {
        cum += frac;
        rows[j + 1] = (height as f64 * cum).round() as usize;
    }
    rows[9] = height;
    rows
}

/// Draws one phantom scan. Deterministic per spec (including seed); the
/// returned scan carries subject and frame id 0, which callers reassign.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<BScan> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // perturbed boundary row for each of the 8 moving boundaries, per column
    let phases: Vec<f32> = (0..8)
        .map(|_| rng.random_range(0.0..std::f32::consts::TAU))
        .collect();
    let base = band_rows(h);
    let boundary = |j: usize, x: usize| -> usize {
        let angle =
            std::f32::consts::TAU * spec.boundary_periods * x as f32 / w as f32 + phases[j - 1];
        let offset = spec.boundary_amplitude * angle.sin();
        ((base[j] as f32 + offset).round() as i64).clamp(1, h as i64 - 1) as usize
    };

    let mut labels = LabelMap::filled(h, w, 0);
    for x in 0..w {
        let mut top = 0usize;
        for j in 1..=8 {
            let bottom = boundary(j, x);
            for y in top..bottom {
                labels.set(y, x, (j - 1) as u8);
            }
            top = bottom;
        }
        for y in top..h {
            labels.set(y, x, 8);
        }
    }

    // elliptical fluid pockets, fully inside the ONL-ISM band
    let blobs = rng.random_range(spec.fluid_count.0..=spec.fluid_count.1);
    for _ in 0..blobs {
        let (rmin, rmax) = spec.fluid_radius;
        let mut rx = rng.random_range(rmin..=rmax).min((w as f32 - 6.0) / 2.0);
        let mut ry = rng.random_range(rmin..=rmax);
        if rx < 1.0 {
            rx = 1.0;
        }
        let xc = rng.random_range(rx + 1.0..=w as f32 - rx - 2.0);
        let x_lo = (xc - rx).floor().max(0.0) as usize;
        let x_hi = ((xc + rx).ceil() as usize).min(w - 1);
        // the band top/bottom vary with x; keep the pocket inside the
        // tightest extent over the columns it spans
        let band_top = (x_lo..=x_hi).map(|x| boundary(5, x)).max().unwrap();
        let band_bottom = (x_lo..=x_hi).map(|x| boundary(6, x)).min().unwrap();
        let avail = band_bottom.saturating_sub(band_top) as f32;
        ry = ry.min((avail - 2.0) / 2.0);
        if ry < 1.0 {
            continue;
        }
        let yc = rng.random_range(band_top as f32 + ry + 0.5..=band_bottom as f32 - ry - 0.5);
        let y_lo = (yc - ry).floor().max(0.0) as usize;
        let y_hi = ((yc + ry).ceil() as usize).min(h - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let dx = (x as f32 - xc) / rx;
                let dy = (y as f32 - yc) / ry;
                if dx * dx + dy * dy <= 1.0 && labels.at(y, x) == CLASS_ONL_ISM {
                    labels.set(y, x, CLASS_FLUID);
                }
            }
        }
    }

    // per-class intensity plus multiplicative speckle-like noise
    let mut image = Tensor::zeros(Shape::new(1, 1, h, w));
    let noise = Normal::new(0.0f32, 1.0).expect("unit normal");
    for y in 0..h {
        for x in 0..w {
            let mut v = spec.intensities[labels.at(y, x) as usize];
            if spec.noise_sigma > 0.0 {
                v *= 1.0 + spec.noise_sigma * rng.sample(noise);
            }
            *image.at_mut(0, 0, y, x) = v.clamp(0.0, 1.0);
        }
    }

    BScan::new(image, labels, 0, 0)
}
