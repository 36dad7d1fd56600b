//! `relaynet segment`: end-to-end inference on whole B-scans. For each scan
//! `s{SS}_f{FF}` the command writes the predicted label map
//! (`..._labels.pgm`, pixel value = class id), optionally the per-class
//! probability tensor (`..._probs.rtn1`), and a color overlay
//! (`..._overlay.ppm`) blending the fixed class palette over the scan.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use relaynet_core::checkpoint::load_checkpoint;
use relaynet_core::data::load_scan_images;
use relaynet_core::io::{write_pgm, write_ppm, write_tensor};
use relaynet_core::metrics::CLASS_NAMES;
use relaynet_core::model::predict;
use relaynet_core::{Error, LabelMap, Result, Tensor};

/// Fixed, documented overlay palette: RGB per class id.
pub const PALETTE: [[u8; 3]; 10] = [
    [0, 0, 0],       // 0 RaR      black
    [230, 25, 75],   // 1 ILM      red
    [255, 225, 25],  // 2 NFL-IPL  yellow
    [60, 180, 75],   // 3 INL      green
    [0, 130, 200],   // 4 OPL      blue
    [245, 130, 48],  // 5 ONL-ISM  orange
    [145, 30, 180],  // 6 ISE      purple
    [70, 240, 240],  // 7 OS-RPE   cyan
    [128, 128, 128], // 8 RbR      gray
    [240, 50, 230],  // 9 Fluid    magenta
];

/// Palette weight in the overlay blend; the rest is the scan intensity.
pub const OVERLAY_OPACITY: f32 = 0.6;

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Checkpoint directory written by `train`
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input dataset directory (manifest.tsv; the label column is optional
    /// and ignored)
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-class probability tensors as RTN1
    #[arg(long)]
    pub probs: bool,
    /// Force the bit-exact single-threaded reference path. This
    /// implementation only has that path, so the flag changes nothing and
    /// is accepted for interface stability.
    #[arg(long)]
    pub deterministic: bool,
}

fn overlay_pixels(image: &Tensor, labels: &LabelMap) -> Vec<u8> {
    let mut rgb = Vec::with_capacity(labels.h * labels.w * 3);
    for y in 0..labels.h {
        for x in 0..labels.w {
            let gray = image.at(0, 0, y, x).clamp(0.0, 1.0) * 255.0;
            let color = PALETTE[labels.at(y, x) as usize];
            for ch in color {
                let v = OVERLAY_OPACITY * ch as f32 + (1.0 - OVERLAY_OPACITY) * gray;
                rgb.push(v.round() as u8);
            }
        }
    }
    rgb
}

fn print_legend() {
    println!(
        "overlay palette (class id, name, R,G,B; blended at {OVERLAY_OPACITY} opacity over the scan):"
    );
    for (c, name) in CLASS_NAMES.iter().enumerate() {
        let [r, g, b] = PALETTE[c];
        println!("  {c}  {name:<8} {r:>3},{g:>3},{b:>3}");
    }
}

pub fn run(args: SegmentArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let scans = load_scan_images(&args.data)?;
    if scans.is_empty() {
        return Err(Error::Data(format!(
            "{} lists no scans",
            args.data.display()
        )));
    }

    let mut settings = String::new();
    let _ = writeln!(settings, "command=segment");
    let _ = writeln!(settings, "depth={}", ckpt.params.config.depth);
    let _ = writeln!(settings, "channels={}", ckpt.params.config.channels);
    let _ = writeln!(settings, "kernel_h={}", ckpt.params.config.kernel_h);
    let _ = writeln!(settings, "kernel_w={}", ckpt.params.config.kernel_w);
    let _ = writeln!(settings, "num_classes={}", ckpt.params.config.num_classes);
    let _ = writeln!(settings, "skip_mode={}", ckpt.params.config.skip_mode.name());
    let _ = writeln!(settings, "checkpoint_epoch={}", ckpt.epoch);
    let _ = writeln!(settings, "probs={}", args.probs);
    super::write_settings_echo(&args.out, &settings)?;

    print_legend();
    for (subject, frame, image) in &scans {
        let start = Instant::now();
        let (mut label_maps, probs) = predict(&ckpt.params, image)?;
        let labels = label_maps.pop().expect("predict returns one map per batch item");
        let stem = format!("s{subject:02}_f{frame:02}");

        write_pgm(
            &args.out.join(format!("{stem}_labels.pgm")),
            labels.h,
            labels.w,
            &labels.data,
        )?;
        if args.probs {
            write_tensor(&args.out.join(format!("{stem}_probs.rtn1")), &probs)?;
        }
        write_ppm(
            &args.out.join(format!("{stem}_overlay.ppm")),
            labels.h,
            labels.w,
            &overlay_pixels(image, &labels),
        )?;
        println!(
            "segmented {stem} ({}x{}) in {:.2} s",
            labels.h,
            labels.w,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
