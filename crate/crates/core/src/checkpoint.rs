//! Checkpoint directory layout: a plain-text `manifest.txt` carrying the
//! model configuration, seed, epoch, and learning rate, plus one RTN1
//! tensor per parameter under `params/`. Names are fixed:
//! `enc{i}`/`bottleneck`/`dec{i}` each own `conv.kernels`, `conv.bias`,
//! `bn.gamma`, `bn.beta`, `bn.running_mean`, `bn.running_var`, and the
//! classifier owns `classifier.kernels` and `classifier.bias`. Vector
//! parameters are stored as `(1, C, 1, 1)` tensors.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::layers::{BatchNormParams, ConvParams};
use crate::model::{ConvBlockParams, ModelConfig, ModelParams};
use crate::tensor::{Shape, Tensor};

pub const MANIFEST_NAME: &str = "manifest.txt";
const FORMAT: &str = "relaynet-checkpoint-v1";

/// A loaded checkpoint: the parameters plus the run state recorded with
/// them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
    pub epoch: usize,
    pub lr: f32,
}

fn vec_tensor(v: &[f32]) -> Tensor {
    Tensor::from_vec(Shape::new(1, v.len(), 1, 1), v.to_vec())
}

fn block_entries(name: &str, block: &ConvBlockParams) -> Vec<(String, Tensor)> {
    vec![
        (format!("{name}.conv.kernels"), block.conv.kernels.clone()),
        (format!("{name}.conv.bias"), vec_tensor(&block.conv.bias)),
        (format!("{name}.bn.gamma"), vec_tensor(&block.bn.gamma)),
        (format!("{name}.bn.beta"), vec_tensor(&block.bn.beta)),
        (
            format!("{name}.bn.running_mean"),
            vec_tensor(&block.bn.running_mean),
        ),
        (
            format!("{name}.bn.running_var"),
            vec_tensor(&block.bn.running_var),
        ),
    ]
}

/// Every parameter tensor in its fixed order.
fn entries(params: &ModelParams) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    for (i, b) in params.encoders.iter().enumerate() {
        out.extend(block_entries(&format!("enc{i}"), b));
    }
    out.extend(block_entries("bottleneck", &params.bottleneck));
    for (i, b) in params.decoders.iter().enumerate() {
        out.extend(block_entries(&format!("dec{i}"), b));
    }
    out.push((
        "classifier.kernels".into(),
        params.classifier.kernels.clone(),
    ));
    out.push(("classifier.bias".into(), vec_tensor(&params.classifier.bias)));
    out
}

/// Writes a checkpoint directory, creating it if needed and overwriting
/// any previous contents of the same names.
pub fn save_checkpoint(
    dir: &Path,
    params: &ModelParams,
    seed: u64,
    epoch: usize,
    lr: f32,
) -> Result<()> {
    let params_dir = dir.join("params");
    fs::create_dir_all(&params_dir).map_err(|e| Error::io(&params_dir, e))?;
    let c = &params.config;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "format={FORMAT}");
    let _ = writeln!(manifest, "depth={}", c.depth);
    let _ = writeln!(manifest, "channels={}", c.channels);
    let _ = writeln!(manifest, "kernel_h={}", c.kernel_h);
    let _ = writeln!(manifest, "kernel_w={}", c.kernel_w);
    let _ = writeln!(manifest, "num_classes={}", c.num_classes);
    let _ = writeln!(manifest, "skip_mode={}", c.skip_mode.name());
    let _ = writeln!(manifest, "seed={seed}");
    let _ = writeln!(manifest, "epoch={epoch}");
    let _ = writeln!(manifest, "lr={lr}");
    let path = dir.join(MANIFEST_NAME);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    for (name, tensor) in entries(params) {
        write_tensor(&params_dir.join(format!("{name}.rtn1")), &tensor)?;
    }
    Ok(())
}

fn manifest_fields(path: &Path, text: &str) -> Result<std::collections::HashMap<String, String>> {
    let mut map = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::format(path, format!("manifest line {line:?} is not key=value"))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn read_vec(path: &Path, expected_len: usize) -> Result<Vec<f32>> {
    let t = read_tensor(path)?;
    let s = t.shape();
    if s != Shape::new(1, expected_len, 1, 1) {
        return Err(Error::format(
            path,
            format!("expected (1,{expected_len},1,1), got {s}"),
        ));
    }
    Ok(t.into_data())
}

fn read_block(params_dir: &Path, name: &str, kernel_shape: Shape) -> Result<ConvBlockParams> {
    let file = |suffix: &str| params_dir.join(format!("{name}.{suffix}.rtn1"));
    let kernels = read_tensor(&file("conv.kernels"))?;
    if kernels.shape() != kernel_shape {
        return Err(Error::format(
            &file("conv.kernels"),
            format!("expected {kernel_shape}, got {}", kernels.shape()),
        ));
    }
    let c_out = kernel_shape.b;
    Ok(ConvBlockParams {
        conv: ConvParams {
            kernels,
            bias: read_vec(&file("conv.bias"), c_out)?,
        },
        bn: BatchNormParams {
            gamma: read_vec(&file("bn.gamma"), c_out)?,
            beta: read_vec(&file("bn.beta"), c_out)?,
            running_mean: read_vec(&file("bn.running_mean"), c_out)?,
            running_var: read_vec(&file("bn.running_var"), c_out)?,
        },
    })
}

/// Reads a checkpoint directory back into parameters and run state.
pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST_NAME);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let fields = manifest_fields(&path, &text)?;
    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| Error::format(&path, format!("manifest is missing {key}")))
    };
    if get("format")? != FORMAT {
        return Err(Error::format(
            &path,
            format!("unsupported checkpoint format {:?}", get("format")?),
        ));
    }
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::format(&path, format!("bad {key} value")))
    };
    let config = ModelConfig {
        depth: parse_usize("depth")?,
        channels: parse_usize("channels")?,
        kernel_h: parse_usize("kernel_h")?,
        kernel_w: parse_usize("kernel_w")?,
        num_classes: parse_usize("num_classes")?,
        skip_mode: get("skip_mode")?
            .parse()
            .map_err(|e: Error| Error::format(&path, e.to_string()))?,
    };
    config.validate()?;
    let seed: u64 = get("seed")?
        .parse()
        .map_err(|_| Error::format(&path, "bad seed value".to_string()))?;
    let epoch = parse_usize("epoch")?;
    let lr: f32 = get("lr")?
        .parse()
        .map_err(|_| Error::format(&path, "bad lr value".to_string()))?;

    let params_dir = dir.join("params");
    let (ch, kh, kw) = (config.channels, config.kernel_h, config.kernel_w);
    let mut encoders = Vec::with_capacity(config.depth);
    for i in 0..config.depth {
        let c_in = if i == 0 { 1 } else { ch };
        encoders.push(read_block(
            &params_dir,
            &format!("enc{i}"),
            Shape::new(ch, c_in, kh, kw),
        )?);
    }
    let bottleneck = read_block(&params_dir, "bottleneck", Shape::new(ch, ch, kh, kw))?;
    let mut decoders = Vec::with_capacity(config.depth);
    for i in 0..config.depth {
        decoders.push(read_block(
            &params_dir,
            &format!("dec{i}"),
            Shape::new(ch, config.decoder_in_channels(i), kh, kw),
        )?);
    }
    let ck_path = params_dir.join("classifier.kernels.rtn1");
    let classifier_kernels = read_tensor(&ck_path)?;
    let expected = Shape::new(config.num_classes, ch, 1, 1);
    if classifier_kernels.shape() != expected {
        return Err(Error::format(
            &ck_path,
            format!("expected {expected}, got {}", classifier_kernels.shape()),
        ));
    }
    let classifier = ConvParams {
        kernels: classifier_kernels,
        bias: read_vec(
            &params_dir.join("classifier.bias.rtn1"),
            config.num_classes,
        )?,
    };
    Ok(Checkpoint {
        params: ModelParams {
            config,
            encoders,
            bottleneck,
            decoders,
            classifier,
        },
        seed,
        epoch,
        lr,
    })
}
