//! `relaynet train`: resolves the run configuration (defaults < preset <
//! `RELAYNET_SEED` < config file < `--set` < flags), trains on a labeled
//! dataset, and writes per-step/per-epoch logs plus periodic and final
//! checkpoints.

use std::fs;
use std::path::PathBuf;

use clap::Args;
use relaynet_core::checkpoint::save_checkpoint;
use relaynet_core::config::{parse_config_pairs, RunConfig};
use relaynet_core::data::load_dataset;
use relaynet_core::model::init_params;
use relaynet_core::train::train;
use relaynet_core::{Error, Result};

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Labeled dataset directory (manifest.tsv + images)
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for checkpoints, logs, and the config echo
    #[arg(long)]
    pub out: PathBuf,
    /// key=value config file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset: relaynet (default) or an ablation baseline bl-1..bl-8
    #[arg(long)]
    pub preset: Option<String>,
    /// Extra KEY=VALUE override, repeatable (any config-file key)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// RNG seed (default: RELAYNET_SEED, else 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Slices per mini-batch
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Width of the B-scan slices fed to the network
    #[arg(long)]
    pub slice_width: Option<usize>,
    /// Stop after this many optimizer steps
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Write a checkpoint every this many epochs
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Disable training-time augmentation
    #[arg(long)]
    pub no_augment: bool,
    /// Force the bit-exact single-threaded reference path. This
    /// implementation only has that path, so the flag changes nothing and
    /// is accepted for interface stability.
    #[arg(long)]
    pub deterministic: bool,
}

fn resolve(args: &TrainArgs) -> Result<RunConfig> {
    let file_pairs = match &args.config {
        Some(path) => parse_config_pairs(path)?,
        None => Vec::new(),
    };
    let preset = args.preset.clone().or_else(|| {
        file_pairs
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone())
    });
    let mut cfg = match preset {
        Some(name) => RunConfig::preset(&name)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = super::env_seed()? {
        cfg.seed = seed;
    }
    for (k, v) in file_pairs.iter().filter(|(k, _)| k != "preset") {
        cfg.apply_kv(k, v)?;
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set needs KEY=VALUE, got {kv:?}")))?;
        cfg.apply_kv(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    if let Some(batch) = args.batch_size {
        cfg.batch_size = batch;
    }
    if let Some(width) = args.slice_width {
        cfg.slice_width = width;
    }
    if let Some(steps) = args.max_steps {
        cfg.max_steps = Some(steps);
    }
    if let Some(every) = args.checkpoint_every {
        cfg.checkpoint_every = every;
    }
    if args.no_augment {
        cfg.augment = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    let scans = load_dataset(&args.data)?;
    if scans.is_empty() {
        return Err(Error::Data(format!(
            "{} lists no scans",
            args.data.display()
        )));
    }
    super::write_settings_echo(&args.out, &cfg.to_key_values())?;

    let mut params = init_params(cfg.model.clone(), cfg.seed)?;
    let mut step_rows = String::from("step\tepoch\tloss\n");
    let mut epoch_rows = String::from("epoch\tmean_loss\tlr\tsteps\n");
    let mut steps_done = 0usize;
    let mut epochs_done = 0usize;
    let mut last_lr = cfg.base_lr as f32;

    let result = train(&cfg, &scans, &mut params, |entry, params| {
        for (i, loss) in entry.step_losses.iter().enumerate() {
            step_rows.push_str(&format!(
                "{}\t{}\t{loss:.6}\n",
                steps_done + i + 1,
                entry.epoch
            ));
        }
        steps_done += entry.step_losses.len();
        epochs_done = entry.epoch + 1;
        last_lr = entry.lr;
        epoch_rows.push_str(&format!(
            "{}\t{:.6}\t{}\t{}\n",
            entry.epoch,
            entry.mean_loss(),
            entry.lr,
            entry.step_losses.len()
        ));
        println!(
            "epoch {:>4}  mean loss {:.6}  lr {}  steps {}",
            entry.epoch,
            entry.mean_loss(),
            entry.lr,
            entry.step_losses.len()
        );
        if (entry.epoch + 1) % cfg.checkpoint_every == 0 {
            let dir = args.out.join(format!("checkpoint-epoch{:04}", entry.epoch + 1));
            save_checkpoint(&dir, params, cfg.seed, entry.epoch + 1, entry.lr)?;
            println!("wrote {}", dir.display());
        }
        Ok(())
    });

    let steps_path = args.out.join("steps.tsv");
    fs::write(&steps_path, &step_rows).map_err(|e| Error::io(&steps_path, e))?;
    let epochs_path = args.out.join("epochs.tsv");
    fs::write(&epochs_path, &epoch_rows).map_err(|e| Error::io(&epochs_path, e))?;

    match result {
        Ok(log) => {
            let dir = args.out.join("checkpoint-final");
            save_checkpoint(&dir, &params, cfg.seed, epochs_done, last_lr)?;
            println!("trained {} steps; wrote {}", log.steps(), dir.display());
            Ok(())
        }
        Err(err) => {
            // params still hold the weights of the last finite step
            let dir = args.out.join("checkpoint-aborted");
            save_checkpoint(&dir, &params, cfg.seed, epochs_done, last_lr)?;
            eprintln!(
                "training aborted; last finite parameters written to {}",
                dir.display()
            );
            Err(err)
        }
    }
}
