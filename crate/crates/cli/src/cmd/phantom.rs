//! `relaynet phantom`: emits a seed-deterministic synthetic dataset of
//! layered-retina images with exact labels in the standard layout
//! (manifest.tsv + PGM pairs). Phantom `i` becomes subject `i+1`, frame 0.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use relaynet_core::data::{generate_phantom, save_dataset, BScan, PhantomSpec};
use relaynet_core::Result;

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of phantoms (one subject each)
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    /// Base RNG seed; phantom i uses seed+i (default: RELAYNET_SEED, else 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Image height in pixels
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    /// Image width in pixels
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Multiplicative intensity noise level
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f32,
    /// Peak sinusoidal displacement of the layer boundaries, in pixels
    #[arg(long, default_value_t = 3.0)]
    pub amplitude: f32,
    /// Minimum fluid blobs per phantom
    #[arg(long, default_value_t = 1)]
    pub fluid_min: usize,
    /// Maximum fluid blobs per phantom
    #[arg(long, default_value_t = 2)]
    pub fluid_max: usize,
}

pub fn run(args: PhantomArgs) -> Result<()> {
    let seed = match args.seed {
        Some(s) => s,
        None => super::env_seed()?.unwrap_or(0),
    };
    let scans: Vec<BScan> = (0..args.count)
        .map(|i| {
            let spec = PhantomSpec {
                height: args.height,
                width: args.width,
                noise_sigma: args.noise_sigma,
                boundary_amplitude: args.amplitude,
                fluid_count: (args.fluid_min, args.fluid_max),
                seed: seed.wrapping_add(i as u64),
                ..PhantomSpec::default()
            };
            let mut scan = generate_phantom(&spec)?;
            scan.subject_id = i as u32 + 1;
            scan.frame_id = 0;
            Ok(scan)
        })
        .collect::<Result<_>>()?;
    save_dataset(&args.out, &scans)?;

    let mut settings = String::new();
    let _ = writeln!(settings, "command=phantom");
    let _ = writeln!(settings, "count={}", args.count);
    let _ = writeln!(settings, "seed={seed}");
    let _ = writeln!(settings, "height={}", args.height);
    let _ = writeln!(settings, "width={}", args.width);
    let _ = writeln!(settings, "noise_sigma={}", args.noise_sigma);
    let _ = writeln!(settings, "amplitude={}", args.amplitude);
    let _ = writeln!(settings, "fluid_min={}", args.fluid_min);
    let _ = writeln!(settings, "fluid_max={}", args.fluid_max);
    super::write_settings_echo(&args.out, &settings)?;

    println!(
        "wrote {} phantoms ({}x{}) to {}",
        args.count,
        args.height,
        args.width,
        args.out.display()
    );
    Ok(())
}
