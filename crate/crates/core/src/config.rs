//! One merged run configuration: model topology, loss composition,
//! optimizer schedule, and data plumbing, with named presets for the
//! published network and its eight ablation baselines. Defaults match the
//! published training protocol.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::{LossConfig, WeightConfig};
use crate::model::{ModelConfig, ModelParams, ParamGrads, SkipMode};
use crate::optim::OptimState;

/// Names accepted by [`RunConfig::preset`].
pub const PRESET_NAMES: [&str; 9] = [
    "relaynet", "bl-1", "bl-2", "bl-3", "bl-4", "bl-5", "bl-6", "bl-7", "bl-8",
];

/// Fully-resolved settings for a training or inference run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub weights: WeightConfig,
    pub base_lr: f64,
    pub momentum: f32,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub seed: u64,
    pub epochs: usize,
    pub slice_width: usize,
    pub batch_size: usize,
    /// Write a checkpoint every this many epochs (and always at the end).
    pub checkpoint_every: usize,
    /// Optional hard cap on optimizer steps across all epochs.
    pub max_steps: Option<usize>,
    pub augment: bool,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            preset: "relaynet".into(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            weights: WeightConfig::default(),
            base_lr: 0.1,
            momentum: 0.9,
            lr_decay_every: 30,
            lr_decay_factor: 0.1,
            seed: 0,
            epochs: 60,
            slice_width: 64,
            batch_size: 50,
            checkpoint_every: 10,
            max_steps: None,
            augment: true,
        }
    }
}

impl RunConfig {
    /// The published configuration (`relaynet`) or one of the ablation
    /// baselines `bl-1`…`bl-8` (case-insensitive):
    ///
    /// | preset | depth | loss              | skips         | weighting |
    /// |--------|-------|-------------------|---------------|-----------|
    /// | bl-1   | 3     | dice + logistic   | none          | yes       |
    /// | bl-2   | 3     | dice + logistic   | low-res only  | yes       |
    /// | bl-3   | 3     | dice + logistic   | high-res only | yes       |
    /// | bl-4   | 3     | logistic          | full          | yes       |
    /// | bl-5   | 3     | dice              | full          | no        |
    /// | bl-6   | 2     | dice + logistic   | full          | yes       |
    /// | bl-7   | 4     | dice + logistic   | full          | yes       |
    /// | bl-8   | 3     | logistic          | full          | no        |
    pub fn preset(name: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let lower = name.to_ascii_lowercase();
        cfg.preset = lower.clone();
        match lower.as_str() {
            "relaynet" => {}
            "bl-1" => cfg.model.skip_mode = SkipMode::None,
            "bl-2" => cfg.model.skip_mode = SkipMode::LowResOnly,
            "bl-3" => cfg.model.skip_mode = SkipMode::HighResOnly,
            "bl-4" => cfg.loss.use_dice = false,
            "bl-5" => {
                cfg.loss.use_logistic = false;
                cfg.disable_weighting();
            }
            "bl-6" => cfg.model.depth = 2,
            "bl-7" => cfg.model.depth = 4,
            "bl-8" => {
                cfg.loss.use_dice = false;
                cfg.disable_weighting();
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset {name:?}; expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        }
        Ok(cfg)
    }

    fn disable_weighting(&mut self) {
        self.loss.use_weighting = false;
        self.weights = WeightConfig::unweighted();
    }

    /// Applies one `key=value` override. Unknown keys are errors so typos
    /// never pass silently.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad {what} value {value:?}"));
        match key {
            "preset" => *self = RunConfig::preset(value)?,
            "depth" => self.model.depth = value.parse().map_err(|_| bad(key))?,
            "channels" => self.model.channels = value.parse().map_err(|_| bad(key))?,
            "kernel_h" => self.model.kernel_h = value.parse().map_err(|_| bad(key))?,
            "kernel_w" => self.model.kernel_w = value.parse().map_err(|_| bad(key))?,
            "num_classes" => self.model.num_classes = value.parse().map_err(|_| bad(key))?,
            "skip_mode" => self.model.skip_mode = value.parse()?,
            "lambda1" => self.loss.lambda1 = value.parse().map_err(|_| bad(key))?,
            "lambda2" => self.loss.lambda2 = value.parse().map_err(|_| bad(key))?,
            "lambda3" => self.loss.lambda3 = value.parse().map_err(|_| bad(key))?,
            "use_logistic" => self.loss.use_logistic = parse_bool(value)?,
            "use_dice" => self.loss.use_dice = parse_bool(value)?,
            "use_weighting" => {
                self.loss.use_weighting = parse_bool(value)?;
                if !self.loss.use_weighting {
                    self.weights = WeightConfig::unweighted();
                }
            }
            "omega1" => self.weights.omega1 = value.parse().map_err(|_| bad(key))?,
            "omega2" => self.weights.omega2 = value.parse().map_err(|_| bad(key))?,
            "boosted_classes" => {
                self.weights.boosted_classes = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|_| bad(key)))
                    .collect::<Result<Vec<u8>>>()?;
            }
            "base_lr" => self.base_lr = value.parse().map_err(|_| bad(key))?,
            "momentum" => self.momentum = value.parse().map_err(|_| bad(key))?,
            "lr_decay_every" => self.lr_decay_every = value.parse().map_err(|_| bad(key))?,
            "lr_decay_factor" => self.lr_decay_factor = value.parse().map_err(|_| bad(key))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad(key))?,
            "slice_width" => self.slice_width = value.parse().map_err(|_| bad(key))?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad(key))?,
            "checkpoint_every" => self.checkpoint_every = value.parse().map_err(|_| bad(key))?,
            "max_steps" => {
                self.max_steps = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad(key))?)
                }
            }
            "augment" => self.augment = parse_bool(value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Loads `key=value` lines (# comments and blanks skipped). A `preset`
    /// line resets everything, so it is applied first regardless of
    /// position; later keys refine it.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let pairs = parse_config_pairs(path)?;
        if let Some((_, preset)) = pairs.iter().find(|(k, _)| k == "preset") {
            *self = RunConfig::preset(preset)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            self.apply_kv(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        let divisor = self.model.divisor();
        if self.slice_width == 0 || self.slice_width % divisor != 0 {
            return Err(Error::Config(format!(
                "slice width {} must be a positive multiple of {divisor} (2^depth)",
                self.slice_width
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config(
                "batch size, epochs, and checkpoint interval must be positive".into(),
            ));
        }
        if let Some(0) = self.max_steps {
            return Err(Error::Config("max_steps must be positive when set".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.base_lr <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.base_lr
            )));
        }
        if self.lr_decay_every == 0 {
            return Err(Error::Config("lr_decay_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Builds the optimizer this run would use for a parameter set.
    pub fn optimizer(&self, params: &ModelParams) -> OptimState {
        OptimState {
            momentum: self.momentum,
            base_lr: self.base_lr,
            decay_every: self.lr_decay_every,
            decay_factor: self.lr_decay_factor,
            lambda3: self.loss.lambda3,
            velocities: ParamGrads::zeros_like(params),
        }
    }

    /// Every resolved field as deterministic `key=value` lines, suitable
    /// for echoing next to run outputs and for feeding back in as a
    /// config file.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "preset={}", self.preset);
        let _ = writeln!(s, "depth={}", self.model.depth);
        let _ = writeln!(s, "channels={}", self.model.channels);
        let _ = writeln!(s, "kernel_h={}", self.model.kernel_h);
        let _ = writeln!(s, "kernel_w={}", self.model.kernel_w);
        let _ = writeln!(s, "num_classes={}", self.model.num_classes);
        let _ = writeln!(s, "skip_mode={}", self.model.skip_mode.name());
        let _ = writeln!(s, "lambda1={}", self.loss.lambda1);
        let _ = writeln!(s, "lambda2={}", self.loss.lambda2);
        let _ = writeln!(s, "lambda3={}", self.loss.lambda3);
        let _ = writeln!(s, "use_logistic={}", self.loss.use_logistic);
        let _ = writeln!(s, "use_dice={}", self.loss.use_dice);
        let _ = writeln!(s, "use_weighting={}", self.loss.use_weighting);
        let _ = writeln!(s, "omega1={}", self.weights.omega1);
        let _ = writeln!(s, "omega2={}", self.weights.omega2);
        let _ = writeln!(
            s,
            "boosted_classes={}",
            self.weights
                .boosted_classes
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(s, "base_lr={}", self.base_lr);
        let _ = writeln!(s, "momentum={}", self.momentum);
        let _ = writeln!(s, "lr_decay_every={}", self.lr_decay_every);
        let _ = writeln!(s, "lr_decay_factor={}", self.lr_decay_factor);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "slice_width={}", self.slice_width);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "checkpoint_every={}", self.checkpoint_every);
        let _ = writeln!(
            s,
            "max_steps={}",
            self.max_steps.map_or("none".into(), |v| v.to_string())
        );
        let _ = writeln!(s, "augment={}", self.augment);
        s
    }
}

/// Parses a plain-text config file into ordered `(key, value)` pairs
/// (# comments and blank lines skipped).
pub fn parse_config_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format(path, format!("config line {line:?} is not key=value"))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean value {value:?}"))),
    }
}
