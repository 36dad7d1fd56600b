//! Aggregated evaluation report: per-class Dice, per-layer MAD-LT and
//! contour error averaged over a scan set, optionally the 9-zone ETDRS
//! thickness differences, plus the originally published benchmark results
//! bundled as a labeled reference column (reported values, never
//! recomputed here).

use super::{
    contour_error, dice_score, etdrs_grid, mad_lt, thickness_profile, EtdrsSpec, CLASS_NAMES,
    LAYER_CLASSES,
};
use crate::data::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::tensor::LabelMap;

/// Benchmark Dice scores as originally reported, per class.
pub const REFERENCE_DICE: [f64; NUM_CLASSES] =
    [0.99, 0.90, 0.94, 0.87, 0.84, 0.93, 0.92, 0.90, 0.99, 0.77];
/// Benchmark MAD-LT (pixels) as originally reported, per layer class.
pub const REFERENCE_MAD_LT: [f64; 7] = [1.50, 1.20, 1.00, 1.31, 1.35, 0.62, 0.92];
/// Benchmark contour error (pixels) as originally reported, per layer class.
pub const REFERENCE_CE: [f64; 7] = [0.85, 1.14, 1.22, 1.35, 2.09, 0.81, 0.81];
/// Benchmark ETDRS zone thickness differences (pixels) as originally
/// reported, zones 1–9.
pub const REFERENCE_ETDRS: [f64; 9] =
    [0.34, 0.202, 0.161, 0.204, 0.151, 0.127, 0.123, 0.132, 0.160];

/// Metrics averaged over one evaluated scan set.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scans: usize,
    /// Mean Dice per class (index = class id).
    pub dice: [f64; NUM_CLASSES],
    /// Mean layer-thickness error per layer (index = class id − 1), pixels.
    pub mad_lt: [f64; 7],
    /// Mean contour error per layer (index = class id − 1), pixels.
    pub ce: [f64; 7],
    /// Absolute ETDRS zone thickness differences, when a grid was
    /// computed; zones without samples stay `None`.
    pub etdrs: Option<[Option<f64>; 9]>,
}

fn check_pairs(preds: &[LabelMap], truths: &[LabelMap]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::Data(format!(
            "{} predictions vs {} reference scans",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Data("no scans to evaluate".into()));
    }
    for (i, (p, t)) in preds.iter().zip(truths).enumerate() {
        if (p.h, p.w) != (t.h, t.w) {
            return Err(Error::Data(format!(
                "scan {i}: prediction is {}x{} but reference is {}x{}",
                p.h, p.w, t.h, t.w
            )));
        }
    }
    Ok(())
}

/// Averages every metric over aligned prediction/reference pairs.
pub fn report(preds: &[LabelMap], truths: &[LabelMap]) -> Result<MetricsReport> {
    report_with_etdrs(preds, truths, None)
}

/// Like [`report`], and when `spec` is given the scan list is additionally
/// treated as one laterally-ordered volume: both sides get an ETDRS grid
/// and the report carries the per-zone absolute thickness differences.
pub fn report_with_etdrs(
    preds: &[LabelMap],
    truths: &[LabelMap],
    spec: Option<&EtdrsSpec>,
) -> Result<MetricsReport> {
    check_pairs(preds, truths)?;
    let n = preds.len() as f64;
    let mut dice = [0.0f64; NUM_CLASSES];
    let mut mad = [0.0f64; 7];
    let mut ce = [0.0f64; 7];
    for (p, t) in preds.iter().zip(truths) {
        for (c, d) in dice.iter_mut().enumerate() {
            *d += dice_score(p, t, c as u8) / n;
        }
        for (i, &c) in LAYER_CLASSES.iter().enumerate() {
            mad[i] += mad_lt(p, t, c) / n;
            ce[i] += contour_error(p, t, c) / n;
        }
    }
    let etdrs = match spec {
        None => None,
        Some(spec) => {
            let pred_profiles: Vec<_> = preds.iter().map(thickness_profile).collect();
            let truth_profiles: Vec<_> = truths.iter().map(thickness_profile).collect();
            let pz = etdrs_grid(&pred_profiles, spec)?;
            let tz = etdrs_grid(&truth_profiles, spec)?;
            let mut diff = [None; 9];
            for z in 0..9 {
                if let (Some(a), Some(b)) = (pz[z], tz[z]) {
                    diff[z] = Some((a - b).abs());
                }
            }
            Some(diff)
        }
    };
    Ok(MetricsReport {
        scans: preds.len(),
        dice,
        mad_lt: mad,
        ce,
        etdrs,
    })
}

impl MetricsReport {
    /// Machine-readable form: one row per value with the published
    /// reference alongside.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tname\tvalue\tpublished_reference\n");
        for c in 0..NUM_CLASSES {
            out.push_str(&format!(
                "dice\t{}\t{:.4}\t{:.2}\n",
                CLASS_NAMES[c], self.dice[c], REFERENCE_DICE[c]
            ));
        }
        for (i, &c) in LAYER_CLASSES.iter().enumerate() {
            out.push_str(&format!(
                "mad_lt\t{}\t{:.4}\t{:.2}\n",
                CLASS_NAMES[c as usize], self.mad_lt[i], REFERENCE_MAD_LT[i]
            ));
        }
        for (i, &c) in LAYER_CLASSES.iter().enumerate() {
            out.push_str(&format!(
                "ce\t{}\t{:.4}\t{:.2}\n",
                CLASS_NAMES[c as usize], self.ce[i], REFERENCE_CE[i]
            ));
        }
        if let Some(zones) = &self.etdrs {
            for (z, v) in zones.iter().enumerate() {
                let value = match v {
                    Some(v) => format!("{v:.4}"),
                    None => "undefined".into(),
                };
                out.push_str(&format!(
                    "etdrs\tzone{}\t{}\t{:.3}\n",
                    z + 1,
                    value,
                    REFERENCE_ETDRS[z]
                ));
            }
        }
        out
    }

    /// Human-readable table. The reference column restates the originally
    /// published benchmark results for orientation; it is never
    /// recomputed.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("evaluated scans: {}\n\n", self.scans));
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "class", "dice", "ref", "mad-lt", "ref", "ce", "ref"
        ));
        for c in 0..NUM_CLASSES {
            let layer = LAYER_CLASSES.iter().position(|&l| l as usize == c);
            let (mad, mad_ref, ce, ce_ref) = match layer {
                Some(i) => (
                    format!("{:.3}", self.mad_lt[i]),
                    format!("{:.2}", REFERENCE_MAD_LT[i]),
                    format!("{:.3}", self.ce[i]),
                    format!("{:.2}", REFERENCE_CE[i]),
                ),
                None => ("-".into(), "-".into(), "-".into(), "-".into()),
            };
            out.push_str(&format!(
                "{:<10} {:>8.4} {:>8.2} {:>8} {:>8} {:>8} {:>8}\n",
                CLASS_NAMES[c], self.dice[c], REFERENCE_DICE[c], mad, mad_ref, ce, ce_ref
            ));
        }
        if let Some(zones) = &self.etdrs {
            out.push_str(&format!(
                "\n{:<10} {:>10} {:>8}\n",
                "zone", "thick-diff", "ref"
            ));
            for (z, v) in zones.iter().enumerate() {
                let value = match v {
                    Some(v) => format!("{v:.4}"),
                    None => "undefined".into(),
                };
                out.push_str(&format!(
                    "{:<10} {:>10} {:>8.3}\n",
                    format!("zone{}", z + 1),
                    value,
                    REFERENCE_ETDRS[z]
                ));
            }
        }
        out.push_str(
            "\nreference columns restate the originally published benchmark results \
             (reported, not recomputed)\n",
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_phantom, PhantomSpec};

    fn phantom_labels(seed: u64) -> LabelMap {
        generate_phantom(&PhantomSpec {
            height: 128,
            width: 64,
            boundary_amplitude: 2.0,
            fluid_count: (1, 1),
            seed,
            ..PhantomSpec::default()
        })
        .unwrap()
        .labels
    }

    #[test]
    fn perfect_predictions_score_perfectly() {
        let truths: Vec<LabelMap> = (0..3).map(phantom_labels).collect();
        let rep = report(&truths, &truths).unwrap();
        assert_eq!(rep.scans, 3);
        assert!(rep.dice.iter().all(|&d| d == 1.0));
        assert!(rep.mad_lt.iter().all(|&e| e == 0.0));
        assert!(rep.ce.iter().all(|&e| e == 0.0));
        assert!(rep.etdrs.is_none());
    }

    #[test]
    fn report_averages_per_scan_metrics() {
        let truths: Vec<LabelMap> = (0..2).map(phantom_labels).collect();
        let preds = vec![truths[0].clone(), phantom_labels(9)];
        let rep = report(&preds, &truths).unwrap();
        for c in 0..NUM_CLASSES {
            let expected = (dice_score(&preds[0], &truths[0], c as u8)
                + dice_score(&preds[1], &truths[1], c as u8))
                / 2.0;
            assert!((rep.dice[c] - expected).abs() < 1e-12);
            assert!(rep.dice[c] >= 0.0 && rep.dice[c] <= 1.0);
        }
        for (i, &c) in LAYER_CLASSES.iter().enumerate() {
            let expected =
                (mad_lt(&preds[0], &truths[0], c) + mad_lt(&preds[1], &truths[1], c)) / 2.0;
            assert!((rep.mad_lt[i] - expected).abs() < 1e-12);
            assert!(rep.ce[i] >= 0.0);
        }
    }

    #[test]
    fn etdrs_differences_are_zero_for_identical_volumes() {
        let truths: Vec<LabelMap> = (0..11).map(phantom_labels).collect();
        let spec = EtdrsSpec::with_fovea(5);
        let rep = report_with_etdrs(&truths, &truths, Some(&spec)).unwrap();
        let zones = rep.etdrs.unwrap();
        assert!(zones.iter().any(|z| z.is_some()));
        for z in zones.into_iter().flatten() {
            assert_eq!(z, 0.0);
        }
    }

    #[test]
    fn report_rejects_mismatched_inputs() {
        let a = vec![phantom_labels(1)];
        let b: Vec<LabelMap> = Vec::new();
        assert!(report(&a, &b).is_err());
        assert!(report(&a, &a[..0].to_vec()).is_err());
        let c = vec![LabelMap::filled(4, 4, 0)];
        assert!(report(&a, &c).is_err());
    }

    #[test]
    fn emitted_forms_cover_every_metric() {
        let truths: Vec<LabelMap> = (0..11).map(phantom_labels).collect();
        let spec = EtdrsSpec::with_fovea(5);
        let rep = report_with_etdrs(&truths, &truths, Some(&spec)).unwrap();
        let tsv = rep.to_tsv();
        let data_rows = tsv.lines().count() - 1;
        assert_eq!(data_rows, 10 + 7 + 7 + 9);
        assert!(tsv.contains("dice\tFluid\t1.0000\t0.77"));
        assert!(tsv.contains("mad_lt\tILM\t0.0000\t1.50"));
        assert!(tsv.contains("ce\tONL-ISM\t0.0000\t2.09"));
        assert!(tsv.contains("etdrs\tzone1\t"));
        let table = rep.to_table();
        for name in CLASS_NAMES {
            assert!(table.contains(name));
        }
        assert!(table.contains("reported, not recomputed"));
    }
}
