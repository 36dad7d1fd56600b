//! Segmentation quality measures: per-class Dice overlap, layer-thickness
//! error (MAD-LT), contour error (CE), and the 9-zone ETDRS thickness
//! grid. All errors are reported in pixels.

mod etdrs;
mod report;

pub use etdrs::{etdrs_grid, EtdrsSpec};
pub use report::{
    report, report_with_etdrs, MetricsReport, REFERENCE_CE, REFERENCE_DICE, REFERENCE_ETDRS,
    REFERENCE_MAD_LT,
};

use crate::data::NUM_CLASSES;
use crate::tensor::LabelMap;

/// Class names in id order.
pub const CLASS_NAMES: [&str; NUM_CLASSES] = [
    "RaR", "ILM", "NFL-IPL", "INL", "OPL", "ONL-ISM", "ISE", "OS-RPE", "RbR", "Fluid",
];

/// The seven retinal layer classes (between the two background regions),
/// the ones MAD-LT and CE are defined over.
pub const LAYER_CLASSES: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];

/// Dice overlap `2|P∩T| / (|P| + |T|)` for one class; 1.0 when the class
/// is absent from both maps. Symmetric in its two arguments.
pub fn dice_score(pred: &LabelMap, truth: &LabelMap, class: u8) -> f64 {
    assert_eq!(
        (pred.h, pred.w),
        (truth.h, truth.w),
        "dice_score needs congruent label maps"
    );
    let mut inter = 0usize;
    let mut p = 0usize;
    let mut t = 0usize;
    for (&a, &b) in pred.data.iter().zip(&truth.data) {
        let in_p = a == class;
        let in_t = b == class;
        p += in_p as usize;
        t += in_t as usize;
        inter += (in_p && in_t) as usize;
    }
    if p + t == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (p + t) as f64
    }
}

/// Per-column pixel counts for every class; column sums always equal the
/// map height.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThicknessProfile {
    /// `counts[x][class]` = pixels of `class` in column `x`.
    pub counts: Vec<[u32; NUM_CLASSES]>,
}

impl ThicknessProfile {
    pub fn width(&self) -> usize {
        self.counts.len()
    }

    pub fn thickness(&self, x: usize, class: u8) -> u32 {
        self.counts[x][class as usize]
    }

    /// Total retinal thickness in a column: the seven layer classes
    /// combined.
    pub fn total_retina(&self, x: usize) -> u32 {
        LAYER_CLASSES
            .iter()
            .map(|&c| self.counts[x][c as usize])
            .sum()
    }
}

/// Counts each class's pixels per column.
pub fn thickness_profile(labels: &LabelMap) -> ThicknessProfile {
    let mut counts = vec![[0u32; NUM_CLASSES]; labels.w];
    for y in 0..labels.h {
        for x in 0..labels.w {
            counts[x][labels.at(y, x) as usize] += 1;
        }
    }
    ThicknessProfile { counts }
}

/// Mean absolute layer-thickness difference over columns, in pixels.
pub fn mad_lt(pred: &LabelMap, truth: &LabelMap, class: u8) -> f64 {
    assert_eq!(
        (pred.h, pred.w),
        (truth.h, truth.w),
        "mad_lt needs congruent label maps"
    );
    let p = thickness_profile(pred);
    let t = thickness_profile(truth);
    let sum: f64 = (0..pred.w)
        .map(|x| (p.thickness(x, class) as f64 - t.thickness(x, class) as f64).abs())
        .sum();
    sum / pred.w as f64
}

/// Topmost row of `class` in each column, if present.
fn top_contour(labels: &LabelMap, class: u8) -> Vec<Option<usize>> {
    (0..labels.w)
        .map(|x| (0..labels.h).find(|&y| labels.at(y, x) == class))
        .collect()
}

/// Mean absolute displacement of a layer's top contour, in pixels.
/// Columns where both maps lack the layer are skipped; columns where
/// exactly one side lacks it count as the given penalty (the map height
/// in [`contour_error`]), so total layer dropout is never rewarded.
/// Zero when the layer appears in no column of either map.
pub fn contour_error_with_penalty(
    pred: &LabelMap,
    truth: &LabelMap,
    class: u8,
    penalty: f64,
) -> f64 {
    assert_eq!(
        (pred.h, pred.w),
        (truth.h, truth.w),
        "contour_error needs congruent label maps"
    );
    let p = top_contour(pred, class);
    let t = top_contour(truth, class);
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for (a, b) in p.iter().zip(&t) {
        match (a, b) {
            (Some(a), Some(b)) => {
                sum += (*a as f64 - *b as f64).abs();
                n += 1;
            }
            (None, None) => {}
            _ => {
                sum += penalty;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// [`contour_error_with_penalty`] with the missing-layer penalty fixed at
/// the map height (the maximal possible displacement).
pub fn contour_error(pred: &LabelMap, truth: &LabelMap, class: u8) -> f64 {
    contour_error_with_penalty(pred, truth, class, pred.h as f64)
}
