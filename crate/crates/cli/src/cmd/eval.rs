//! `relaynet eval`: pairs predicted label maps with a ground-truth dataset
//! by manifest identity (`s{SS}_f{FF}_labels.pgm` in the prediction
//! directory), computes per-class Dice, per-layer thickness and contour
//! errors, optionally the 9-zone ETDRS thickness differences, and writes
//! the report as TSV and as a plain-text table.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use relaynet_core::data::{load_dataset, NUM_CLASSES};
use relaynet_core::io::read_pgm_labels;
use relaynet_core::metrics::{report_with_etdrs, EtdrsSpec};
use relaynet_core::{Error, Result};

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of predicted label maps (s{SS}_f{FF}_labels.pgm)
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth dataset directory (manifest.tsv)
    #[arg(long)]
    pub truth: PathBuf,
    /// Output directory for report.tsv and report.txt
    #[arg(long)]
    pub out: PathBuf,
    /// Also compute the 9-zone ETDRS grid; the ground truth must then be a
    /// single subject's laterally ordered volume
    #[arg(long)]
    pub etdrs: bool,
    /// Index of the foveal frame within the volume (default: middle frame)
    #[arg(long)]
    pub fovea: Option<usize>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let truth_scans = load_dataset(&args.truth)?;
    if truth_scans.is_empty() {
        return Err(Error::Data(format!(
            "{} lists no scans",
            args.truth.display()
        )));
    }

    let mut preds = Vec::with_capacity(truth_scans.len());
    for scan in &truth_scans {
        let name = format!("s{:02}_f{:02}_labels.pgm", scan.subject_id, scan.frame_id);
        let path = args.pred.join(&name);
        if !path.is_file() {
            return Err(Error::Data(format!(
                "no prediction for scan s{:02}_f{:02}: {} does not exist",
                scan.subject_id,
                scan.frame_id,
                path.display()
            )));
        }
        preds.push(read_pgm_labels(&path, NUM_CLASSES)?);
    }
    let truths: Vec<_> = truth_scans.iter().map(|s| s.labels.clone()).collect();

    let spec = if args.etdrs {
        let mut subjects: Vec<u32> = truth_scans.iter().map(|s| s.subject_id).collect();
        subjects.dedup();
        subjects.sort_unstable();
        subjects.dedup();
        if subjects.len() != 1 {
            return Err(Error::Config(format!(
                "--etdrs treats the scans as one subject's volume, but the dataset has {} subjects",
                subjects.len()
            )));
        }
        let fovea = args.fovea.unwrap_or(truth_scans.len() / 2);
        Some(EtdrsSpec::with_fovea(fovea))
    } else {
        None
    };

    let report = report_with_etdrs(&preds, &truths, spec.as_ref())?;

    let mut settings = String::new();
    let _ = writeln!(settings, "command=eval");
    let _ = writeln!(settings, "scans={}", report.scans);
    let _ = writeln!(settings, "etdrs={}", args.etdrs);
    if let Some(spec) = &spec {
        let _ = writeln!(settings, "fovea_frame={}", spec.fovea_frame);
        let _ = writeln!(settings, "lateral_um_per_px={}", spec.lateral_um_per_px);
        let _ = writeln!(settings, "azimuthal_um_per_frame={}", spec.azimuthal_um_per_frame);
    }
    super::write_settings_echo(&args.out, &settings)?;

    let tsv_path = args.out.join("report.tsv");
    fs::write(&tsv_path, report.to_tsv()).map_err(|e| Error::io(&tsv_path, e))?;
    let txt_path = args.out.join("report.txt");
    fs::write(&txt_path, report.to_table()).map_err(|e| Error::io(&txt_path, e))?;

    print!("{}", report.to_table());
    println!("wrote {} and {}", tsv_path.display(), txt_path.display());
    Ok(())
}
