//! Dataset ingestion, subject-wise splits, B-scan slicing, augmentation,
//! and mini-batch assembly.

mod dataset;
mod phantom;

pub use dataset::{load_dataset, load_scan_images, save_dataset};
pub use phantom::{band_rows, generate_phantom, PhantomSpec};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{one_hot, weight_map, WeightConfig};
use crate::tensor::{LabelMap, Shape, Tensor};

/// Total number of segmentation classes.
pub const NUM_CLASSES: usize = 10;
/// Region above the retina (background at the top of a scan).
pub const CLASS_RAR: u8 = 0;
/// ONL-ISM, the band that can contain fluid pockets.
pub const CLASS_ONL_ISM: u8 = 5;
/// Region below the RPE (background at the bottom of a scan).
pub const CLASS_RBR: u8 = 8;
/// Accumulated fluid.
pub const CLASS_FLUID: u8 = 9;

/// One annotated B-scan: a grayscale image in `[0, 1]` and a congruent
/// per-pixel label map, tagged with its subject and frame.
#[derive(Debug, Clone)]
pub struct BScan {
    pub image: Tensor,
    pub labels: LabelMap,
    pub subject_id: u32,
    pub frame_id: u32,
}

impl BScan {
    pub fn new(image: Tensor, labels: LabelMap, subject_id: u32, frame_id: u32) -> Result<BScan> {
        let s = image.shape();
        if s.b != 1 || s.c != 1 {
            return Err(Error::shape("scan image", s, "(1,1,H,W)"));
        }
        if s.h != labels.h || s.w != labels.w {
            return Err(Error::shape(
                "scan labels",
                s,
                format!("labels {}x{}", labels.h, labels.w),
            ));
        }
        Ok(BScan {
            image,
            labels,
            subject_id,
            frame_id,
        })
    }

    pub fn height(&self) -> usize {
        self.image.shape().h
    }

    pub fn width(&self) -> usize {
        self.image.shape().w
    }
}

/// A stacked mini-batch of training slices.
#[derive(Debug, Clone)]
pub struct SliceBatch {
    /// `(B, 1, H, w)` image slices.
    pub images: Tensor,
    /// `(B, K, H, w)` one-hot label indicators.
    pub onehots: Tensor,
    /// `(B, 1, H, w)` per-pixel loss weights.
    pub weights: Tensor,
}

impl SliceBatch {
    pub fn len(&self) -> usize {
        self.images.shape().b
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cuts a scan into `⌊W / slice_width⌋` non-overlapping width-wise slices,
/// left to right; remainder columns on the right are dropped.
pub fn slice_bscan(scan: &BScan, slice_width: usize) -> Result<Vec<(Tensor, LabelMap)>> {
    let (h, w) = (scan.height(), scan.width());
    if slice_width == 0 || slice_width > w {
        return Err(Error::Config(format!(
            "slice width {slice_width} outside 1..={w} (scan width)"
        )));
    }
    let count = w / slice_width;
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let left = s * slice_width;
        let image = crate::tensor::crop(&scan.image, 0, left, h, slice_width)?;
        let mut labels = LabelMap::filled(h, slice_width, 0);
        for y in 0..h {
            let src = &scan.labels.data[y * w + left..y * w + left + slice_width];
            labels.data[y * slice_width..(y + 1) * slice_width].copy_from_slice(src);
        }
        out.push((image, labels));
    }
    Ok(out)
}

/// Magnitudes for the random geometric augmentations. Zeros everywhere
/// make [`augment`] the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Probability of a horizontal flip.
    pub flip_prob: f64,
    /// Vertical translation drawn uniformly from `[-max, +max]` pixels.
    pub max_vertical_shift: usize,
    /// Horizontal translation drawn uniformly from `[-max, +max]` pixels.
    pub max_horizontal_shift: usize,
}

impl Default for AugmentConfig {
    fn default() -> AugmentConfig {
        AugmentConfig {
            flip_prob: 0.5,
            max_vertical_shift: 8,
            max_horizontal_shift: 4,
        }
    }
}

fn flip_horizontal(image: &Tensor, labels: &LabelMap) -> (Tensor, LabelMap) {
    let s = image.shape();
    let img = Tensor::from_fn(s, |b, c, y, x| image.at(b, c, y, s.w - 1 - x));
    let mut lab = LabelMap::filled(labels.h, labels.w, 0);
    for y in 0..labels.h {
        for x in 0..labels.w {
            lab.set(y, x, labels.at(y, labels.w - 1 - x));
        }
    }
    (img, lab)
}

/// Moves content down by `dy` rows (up when negative). Vacated image rows
/// are zero; vacated label rows take the background class for that side:
/// region-above-retina at the top, region-below-RPE at the bottom.
fn shift_vertical(image: &Tensor, labels: &LabelMap, dy: i64) -> (Tensor, LabelMap) {
    let s = image.shape();
    let img = Tensor::from_fn(s, |b, c, y, x| {
        let src = y as i64 - dy;
        if src >= 0 && (src as usize) < s.h {
            image.at(b, c, src as usize, x)
        } else {
            0.0
        }
    });
    let mut lab = LabelMap::filled(labels.h, labels.w, 0);
    for y in 0..labels.h {
        for x in 0..labels.w {
            let src = y as i64 - dy;
            let v = if src < 0 {
                CLASS_RAR
            } else if (src as usize) >= labels.h {
                CLASS_RBR
            } else {
                labels.at(src as usize, x)
            };
            lab.set(y, x, v);
        }
    }
    (img, lab)
}

/// Moves content right by `dx` columns (left when negative); vacated
/// columns replicate the nearest surviving edge column in both the image
/// and the labels, so no new intensity or class values are introduced.
fn shift_horizontal(image: &Tensor, labels: &LabelMap, dx: i64) -> (Tensor, LabelMap) {
    let s = image.shape();
    let clamp = |x: usize| (x as i64 - dx).clamp(0, s.w as i64 - 1) as usize;
    let img = Tensor::from_fn(s, |b, c, y, x| image.at(b, c, y, clamp(x)));
    let mut lab = LabelMap::filled(labels.h, labels.w, 0);
    for y in 0..labels.h {
        for x in 0..labels.w {
            lab.set(y, x, labels.at(y, clamp(x)));
        }
    }
    (img, lab)
}

/// Applies one random draw of the geometric augmentations — flip, then
/// vertical shift, then horizontal shift — identically to the image and
/// its labels. Deterministic per seed.
pub fn augment(
    image: &Tensor,
    labels: &LabelMap,
    cfg: &AugmentConfig,
    seed: u64,
) -> (Tensor, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let flip = cfg.flip_prob > 0.0 && rng.random_bool(cfg.flip_prob);
    let v = cfg.max_vertical_shift as i64;
    let dy = if v > 0 { rng.random_range(-v..=v) } else { 0 };
    let h = cfg.max_horizontal_shift as i64;
    let dx = if h > 0 { rng.random_range(-h..=h) } else { 0 };

    let mut img = image.clone();
    let mut lab = labels.clone();
    if flip {
        (img, lab) = flip_horizontal(&img, &lab);
    }
    if dy != 0 {
        (img, lab) = shift_vertical(&img, &lab, dy);
    }
    if dx != 0 {
        (img, lab) = shift_horizontal(&img, &lab, dx);
    }
    (img, lab)
}

const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix_seed(seed: u64, salt: u64) -> u64 {
    seed ^ salt.wrapping_mul(SEED_MIX)
}

/// Reproducible source of shuffled, augmented training batches. Scans are
/// sliced once up front; each epoch reshuffles the slices under a seed
/// derived from the stream seed and the epoch number, then yields batches
/// with one-hot labels and weight maps attached. The final partial batch
/// is kept.
pub struct BatchStream {
    slices: Vec<(Tensor, LabelMap)>,
    batch_size: usize,
    num_classes: usize,
    wc: WeightConfig,
    augment: Option<AugmentConfig>,
    seed: u64,
}

impl BatchStream {
    pub fn new(
        scans: &[BScan],
        slice_width: usize,
        batch_size: usize,
        num_classes: usize,
        wc: WeightConfig,
        augment: Option<AugmentConfig>,
        seed: u64,
    ) -> Result<BatchStream> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        let mut slices = Vec::new();
        for scan in scans {
            slices.extend(slice_bscan(scan, slice_width)?);
        }
        if slices.is_empty() {
            return Err(Error::Data("dataset produced no training slices".into()));
        }
        if let Some(max) = slices
            .iter()
            .flat_map(|(_, l)| l.data.iter().copied())
            .max()
        {
            if max as usize >= num_classes {
                return Err(Error::Data(format!(
                    "label value {max} out of range (classes 0..{num_classes})"
                )));
            }
        }
        Ok(BatchStream {
            slices,
            batch_size,
            num_classes,
            wc,
            augment,
            seed,
        })
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn num_batches(&self) -> usize {
        self.slices.len().div_ceil(self.batch_size)
    }

    /// The batches of one epoch, in their seeded shuffle order.
    pub fn epoch(&self, epoch: usize) -> EpochBatches<'_> {
        let epoch_seed = mix_seed(self.seed, epoch as u64);
        let mut order: Vec<usize> = (0..self.slices.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        EpochBatches {
            stream: self,
            order,
            epoch_seed,
            pos: 0,
        }
    }
}

pub struct EpochBatches<'a> {
    stream: &'a BatchStream,
    order: Vec<usize>,
    epoch_seed: u64,
    pos: usize,
}

impl Iterator for EpochBatches<'_> {
    type Item = SliceBatch;

    fn next(&mut self) -> Option<SliceBatch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.stream.batch_size).min(self.order.len());
        let indices = &self.order[self.pos..end];
        let b = indices.len();
        let (ref img0, _) = self.stream.slices[indices[0]];
        let (h, w) = (img0.shape().h, img0.shape().w);
        let k = self.stream.num_classes;

        let mut images = Tensor::zeros(Shape::new(b, 1, h, w));
        let mut onehots = Tensor::zeros(Shape::new(b, k, h, w));
        let mut weights = Tensor::zeros(Shape::new(b, 1, h, w));
        for (bi, &si) in indices.iter().enumerate() {
            let (ref img, ref lab) = self.stream.slices[si];
            let (img, lab) = match &self.stream.augment {
                Some(cfg) => augment(img, lab, cfg, mix_seed(self.epoch_seed, (self.pos + bi) as u64 + 1)),
                None => (img.clone(), lab.clone()),
            };
            let plane = h * w;
            images.data_mut()[bi * plane..(bi + 1) * plane].copy_from_slice(img.data());
            let oh = one_hot(&lab, k);
            onehots.data_mut()[bi * k * plane..(bi + 1) * k * plane].copy_from_slice(oh.data());
            let wm = weight_map(&lab, &self.stream.wc);
            weights.data_mut()[bi * plane..(bi + 1) * plane].copy_from_slice(wm.data());
        }
        self.pos = end;
        Some(SliceBatch {
            images,
            onehots,
            weights,
        })
    }
}

/// How to divide subjects between training and testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    /// First half of the sorted subjects trains, second half tests.
    FiftyFifty,
    /// The first `k` sorted subjects form a cross-validation pool (each
    /// fold holds one of them out); any remaining subjects are the test
    /// set.
    KFold(usize),
}

/// One cross-validation rotation within the training pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<u32>,
    pub val: Vec<u32>,
}

/// A deterministic subject-level split. `train_subjects` and
/// `test_subjects` are disjoint and together cover every subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_subjects: Vec<u32>,
    pub test_subjects: Vec<u32>,
    /// Cross-validation folds over `train_subjects`; empty for the plain
    /// fifty-fifty split.
    pub folds: Vec<Fold>,
}

/// Splits subjects deterministically (ids are sorted and deduplicated
/// first, so input order never matters).
pub fn split_subjects(subjects: &[u32], kind: SplitKind) -> Result<SplitPlan> {
    let mut ids: Vec<u32> = subjects.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Err(Error::Data("no subjects to split".into()));
    }
    match kind {
        SplitKind::FiftyFifty => {
            let cut = ids.len().div_ceil(2);
            Ok(SplitPlan {
                train_subjects: ids[..cut].to_vec(),
                test_subjects: ids[cut..].to_vec(),
                folds: Vec::new(),
            })
        }
        SplitKind::KFold(k) => {
            if k < 2 || k > ids.len() {
                return Err(Error::Config(format!(
                    "fold count {k} outside 2..={} (subject count)",
                    ids.len()
                )));
            }
            let pool = ids[..k].to_vec();
            let folds = (0..k)
                .map(|i| Fold {
                    train: pool
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, &s)| s)
                        .collect(),
                    val: vec![pool[i]],
                })
                .collect();
            Ok(SplitPlan {
                train_subjects: pool,
                test_subjects: ids[k..].to_vec(),
                folds,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_scan(h: usize, w: usize) -> BScan {
        let image = Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| {
            (y * w + x) as f32 / (h * w) as f32
        });
        let labels = LabelMap::new(
            h,
            w,
            (0..h * w).map(|i| (i % NUM_CLASSES) as u8).collect(),
        );
        BScan::new(image, labels, 1, 1).unwrap()
    }

    #[test]
    fn scan_rejects_incongruent_labels() {
        let image = Tensor::zeros(Shape::new(1, 1, 8, 8));
        let labels = LabelMap::filled(8, 4, 0);
        assert!(BScan::new(image, labels, 0, 0).is_err());
    }

    #[test]
    fn slicing_counts_and_drops_remainder() {
        let scan = grid_scan(16, 740);
        let slices = slice_bscan(&scan, 64).unwrap();
        assert_eq!(slices.len(), 11);
        for (img, lab) in &slices {
            assert_eq!(img.shape(), Shape::new(1, 1, 16, 64));
            assert_eq!((lab.h, lab.w), (16, 64));
        }
    }

    #[test]
    fn slicing_full_width_is_identity() {
        let scan = grid_scan(8, 24);
        let slices = slice_bscan(&scan, 24).unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].0.data(), scan.image.data());
        assert_eq!(slices[0].1, scan.labels);
    }

    #[test]
    fn slicing_reassembles_covered_region_bit_exact() {
        let scan = grid_scan(8, 100);
        let slices = slice_bscan(&scan, 16).unwrap();
        assert_eq!(slices.len(), 6);
        for (s, (img, lab)) in slices.iter().enumerate() {
            for y in 0..8 {
                for x in 0..16 {
                    let gx = s * 16 + x;
                    assert_eq!(
                        img.at(0, 0, y, x).to_bits(),
                        scan.image.at(0, 0, y, gx).to_bits()
                    );
                    assert_eq!(lab.at(y, x), scan.labels.at(y, gx));
                }
            }
        }
    }

    #[test]
    fn slicing_rejects_oversized_width() {
        let scan = grid_scan(8, 24);
        assert!(slice_bscan(&scan, 25).is_err());
        assert!(slice_bscan(&scan, 0).is_err());
    }

    #[test]
    fn augment_with_zero_magnitudes_is_identity() {
        let scan = grid_scan(12, 10);
        let cfg = AugmentConfig {
            flip_prob: 0.0,
            max_vertical_shift: 0,
            max_horizontal_shift: 0,
        };
        for seed in [0, 1, 99] {
            let (img, lab) = augment(&scan.image, &scan.labels, &cfg, seed);
            assert_eq!(img.data(), scan.image.data());
            assert_eq!(lab, scan.labels);
        }
    }

    #[test]
    fn forced_flip_is_an_involution_and_keeps_histogram() {
        let scan = grid_scan(12, 10);
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            max_vertical_shift: 0,
            max_horizontal_shift: 0,
        };
        let (img1, lab1) = augment(&scan.image, &scan.labels, &cfg, 5);
        assert_ne!(img1.data(), scan.image.data());
        assert_eq!(
            lab1.histogram(9),
            scan.labels.histogram(9),
            "flip must preserve the label histogram"
        );
        let (img2, lab2) = augment(&img1, &lab1, &cfg, 6);
        assert_eq!(img2.data(), scan.image.data());
        assert_eq!(lab2, scan.labels);
    }

    #[test]
    fn vertical_shift_fills_background_classes() {
        let scan = grid_scan(10, 6);
        let (img, lab) = shift_vertical(&scan.image, &scan.labels, 3);
        for y in 0..3 {
            for x in 0..6 {
                assert_eq!(img.at(0, 0, y, x), 0.0);
                assert_eq!(lab.at(y, x), CLASS_RAR);
            }
        }
        for y in 3..10 {
            for x in 0..6 {
                assert_eq!(img.at(0, 0, y, x), scan.image.at(0, 0, y - 3, x));
                assert_eq!(lab.at(y, x), scan.labels.at(y - 3, x));
            }
        }
        let (img, lab) = shift_vertical(&scan.image, &scan.labels, -2);
        for y in 8..10 {
            for x in 0..6 {
                assert_eq!(img.at(0, 0, y, x), 0.0);
                assert_eq!(lab.at(y, x), CLASS_RBR);
            }
        }
        for y in 0..8 {
            for x in 0..6 {
                assert_eq!(img.at(0, 0, y, x), scan.image.at(0, 0, y + 2, x));
            }
        }
    }

    #[test]
    fn horizontal_shift_replicates_edges() {
        let scan = grid_scan(4, 8);
        let (img, lab) = shift_horizontal(&scan.image, &scan.labels, 2);
        for y in 0..4 {
            // vacated left columns replicate the original first column
            for x in 0..2 {
                assert_eq!(img.at(0, 0, y, x), scan.image.at(0, 0, y, 0));
                assert_eq!(lab.at(y, x), scan.labels.at(y, 0));
            }
            for x in 2..8 {
                assert_eq!(img.at(0, 0, y, x), scan.image.at(0, 0, y, x - 2));
                assert_eq!(lab.at(y, x), scan.labels.at(y, x - 2));
            }
        }
    }

    #[test]
    fn augment_moves_image_and_labels_together() {
        // encode source coordinates (offset by 1 so the vertical-shift
        // fill value 0.0 is unambiguous): wherever the image carries a
        // coordinate, the labels must carry the class from the same source
        let (h, w) = (16, 12);
        let image = Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| (y * w + x + 1) as f32);
        let labels = LabelMap::new(h, w, (0..h * w).map(|i| (i % 7 + 1) as u8).collect());
        let cfg = AugmentConfig::default();
        for seed in 0..20u64 {
            let (img, lab) = augment(&image, &labels, &cfg, seed);
            for y in 0..h {
                for x in 0..w {
                    let v = img.at(0, 0, y, x);
                    if v == 0.0 {
                        continue; // vacated image pixel (vertical fill)
                    }
                    let src = v as usize - 1;
                    assert_eq!(
                        lab.at(y, x),
                        labels.data[src],
                        "seed {seed}: labels moved differently at ({y},{x})"
                    );
                }
            }
        }
    }

    #[test]
    fn augment_is_deterministic_per_seed() {
        let scan = grid_scan(20, 16);
        let cfg = AugmentConfig::default();
        let (a_img, a_lab) = augment(&scan.image, &scan.labels, &cfg, 11);
        let (b_img, b_lab) = augment(&scan.image, &scan.labels, &cfg, 11);
        assert_eq!(a_img.data(), b_img.data());
        assert_eq!(a_lab, b_lab);
    }

    fn stream_scans() -> Vec<BScan> {
        (0..5).map(|_| grid_scan(8, 32)).collect()
    }

    #[test]
    fn batch_stream_counts_and_shapes() {
        let scans = stream_scans(); // 5 scans x 4 slices = 20
        let stream = BatchStream::new(
            &scans,
            8,
            6,
            NUM_CLASSES,
            WeightConfig::default(),
            None,
            7,
        )
        .unwrap();
        assert_eq!(stream.num_slices(), 20);
        assert_eq!(stream.num_batches(), 4);
        let batches: Vec<SliceBatch> = stream.epoch(0).collect();
        assert_eq!(batches.len(), 4);
        let sizes: Vec<usize> = batches.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, [6, 6, 6, 2], "final partial batch is kept");
        for b in &batches {
            let n = b.len();
            assert_eq!(b.images.shape(), Shape::new(n, 1, 8, 8));
            assert_eq!(b.onehots.shape(), Shape::new(n, NUM_CLASSES, 8, 8));
            assert_eq!(b.weights.shape(), Shape::new(n, 1, 8, 8));
        }
    }

    #[test]
    fn batch_stream_attaches_consistent_onehots_and_weights() {
        let scans = stream_scans();
        let stream = BatchStream::new(
            &scans,
            8,
            5,
            NUM_CLASSES,
            WeightConfig::default(),
            None,
            3,
        )
        .unwrap();
        for batch in stream.epoch(2) {
            let s = batch.onehots.shape();
            for b in 0..s.b {
                for y in 0..s.h {
                    for x in 0..s.w {
                        let sum: f32 = (0..s.c).map(|c| batch.onehots.at(b, c, y, x)).sum();
                        assert_eq!(sum, 1.0, "one-hot column must have a single 1");
                        assert!(batch.weights.at(b, 0, y, x) >= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn batch_stream_is_reproducible_and_reshuffles_across_epochs() {
        let scans = stream_scans();
        let make = || {
            BatchStream::new(
                &scans,
                8,
                6,
                NUM_CLASSES,
                WeightConfig::default(),
                Some(AugmentConfig::default()),
                42,
            )
            .unwrap()
        };
        let a: Vec<SliceBatch> = make().epoch(1).collect();
        let b: Vec<SliceBatch> = make().epoch(1).collect();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.images.data(), y.images.data());
            assert_eq!(x.onehots.data(), y.onehots.data());
            assert_eq!(x.weights.data(), y.weights.data());
        }
        let c: Vec<SliceBatch> = make().epoch(2).collect();
        assert!(
            a.iter()
                .zip(&c)
                .any(|(x, y)| x.images.data() != y.images.data()),
            "different epochs should shuffle differently"
        );
    }

    #[test]
    fn batch_stream_rejects_empty_input() {
        assert!(BatchStream::new(
            &[],
            8,
            4,
            NUM_CLASSES,
            WeightConfig::default(),
            None,
            0
        )
        .is_err());
    }

    #[test]
    fn fifty_fifty_split_matches_published_layout() {
        let subjects: Vec<u32> = (1..=10).collect();
        let plan = split_subjects(&subjects, SplitKind::FiftyFifty).unwrap();
        assert_eq!(plan.train_subjects, [1, 2, 3, 4, 5]);
        assert_eq!(plan.test_subjects, [6, 7, 8, 9, 10]);
        assert!(plan.folds.is_empty());
    }

    #[test]
    fn kfold_rotates_each_pool_subject_out_once() {
        let subjects: Vec<u32> = (1..=10).collect();
        let plan = split_subjects(&subjects, SplitKind::KFold(8)).unwrap();
        assert_eq!(plan.train_subjects, (1..=8).collect::<Vec<u32>>());
        assert_eq!(plan.test_subjects, [9, 10]);
        assert_eq!(plan.folds.len(), 8);
        let mut held_out: Vec<u32> = plan.folds.iter().flat_map(|f| f.val.clone()).collect();
        held_out.sort_unstable();
        assert_eq!(held_out, (1..=8).collect::<Vec<u32>>());
        for fold in &plan.folds {
            assert_eq!(fold.train.len(), 7);
            assert!(fold.val.iter().all(|v| !fold.train.contains(v)));
            let mut all: Vec<u32> = fold.train.iter().chain(&fold.val).copied().collect();
            all.sort_unstable();
            assert_eq!(all, plan.train_subjects);
        }
    }

    #[test]
    fn kfold_on_exactly_k_subjects_leaves_no_test_set() {
        let subjects: Vec<u32> = (1..=8).collect();
        let plan = split_subjects(&subjects, SplitKind::KFold(8)).unwrap();
        assert!(plan.test_subjects.is_empty());
        assert_eq!(plan.folds.len(), 8);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        assert!(split_subjects(&[], SplitKind::FiftyFifty).is_err());
        let subjects: Vec<u32> = (1..=4).collect();
        assert!(split_subjects(&subjects, SplitKind::KFold(5)).is_err());
        assert!(split_subjects(&subjects, SplitKind::KFold(1)).is_err());
    }

    #[test]
    fn split_ignores_input_order_and_duplicates() {
        let a = split_subjects(&[3, 1, 2, 4], SplitKind::FiftyFifty).unwrap();
        let b = split_subjects(&[4, 4, 2, 1, 3, 3], SplitKind::FiftyFifty).unwrap();
        assert_eq!(a, b);
    }
}
