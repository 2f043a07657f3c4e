//! Command implementations behind the `smfd` binary. Every command is a
//! thin wrapper over library calls so tests can compare CLI behavior against
//! direct invocation.
//!
//! Exit-code contract: 0 success, 2 input error, 3 model/weights error.

use crate::degrade::{apply_plan, sample_plan_with, DegradationPlan, PipelineConfig};
use crate::imageio::{self, ImageIoError};
use crate::maskops::{one_hot, LabelMask, LabelSpace};
use crate::metrics::{dice_jaccard, mse, psnr_from_mse, ssim, MetricReport};
use crate::nets::{
    build_network, forward, param_count, ExecutionOptions, NamedTensorStore, NetConfig, NetError,
    NetKind,
};
use crate::rng::derive_seed;
use crate::tensor::Tensor;
use crate::train::{synthetic_pairs, train_smoke};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Model(String),
}

impl CliError {
    /// Stable exit-code contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Model(_) => 3,
        }
    }
}

impl From<ImageIoError> for CliError {
    fn from(e: ImageIoError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::MissingWeight { .. }
            | NetError::WeightShape { .. }
            | NetError::Container(_) => CliError::Model(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// One JSONL manifest record: the applied plan plus the output file name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub file: String,
    pub seed: u64,
    pub layers: Vec<crate::degrade::BlurLayer>,
    pub scale: f64,
    pub noise_sigma: f64,
}

impl ManifestRecord {
    pub fn from_plan(file: &str, plan: &DegradationPlan) -> Self {
        Self {
            file: file.to_string(),
            seed: plan.seed,
            layers: plan.layers.clone(),
            scale: plan.scale,
            noise_sigma: plan.noise_sigma,
        }
    }

    pub fn to_plan(&self) -> DegradationPlan {
        DegradationPlan {
            layers: self.layers.clone(),
            scale: self.scale,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DegradeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub seed: u64,
    pub manifest: Option<PathBuf>,
    pub kernel_set: Option<Vec<usize>>,
    pub max_layers: Option<usize>,
}

/// Degrades every PNG in the input directory. Per-image seeds derive from
/// the master seed and the file's sorted index, so results are independent
/// of processing order. Unreadable images are skipped with a note on
/// stderr; the command fails only if nothing was processed.
pub fn cmd_degrade(args: &DegradeArgs) -> Result<Vec<ManifestRecord>> {
    let mut config = PipelineConfig::default();
    if let Some(sizes) = &args.kernel_set {
        if sizes.is_empty() || sizes.iter().any(|&k| k % 2 == 0) {
            return Err(CliError::Input(
                "kernel set must be non-empty odd sizes".into(),
            ));
        }
        config.kernel_sizes = sizes.clone();
    }
    if let Some(layers) = args.max_layers {
        if !(1..=3).contains(&layers) {
            return Err(CliError::Input("max layers must be in 1..=3".into()));
        }
        config.max_layers = layers;
    }

    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.input)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.input.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "png"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!(
            "no PNG files in {}",
            args.input.display()
        )));
    }
    std::fs::create_dir_all(&args.output)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.output.display())))?;

    let mut records = Vec::new();
    for (index, path) in files.iter().enumerate() {
        let image = match imageio::load_rgb(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("skipping {}: {e}", path.display());
                continue;
            }
        };
        let seed = derive_seed(args.seed, index as u64);
        let plan = sample_plan_with(seed, &config);
        let degraded = apply_plan(&image, &plan)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let name = path
            .file_name()
            .expect("listed file has a name")
            .to_string_lossy()
            .into_owned();
        imageio::save_rgb(&args.output.join(&name), &degraded)?;
        records.push(ManifestRecord::from_plan(&name, &plan));
    }
    if records.is_empty() {
        return Err(CliError::Input("all input images failed to load".into()));
    }

    if let Some(manifest_path) = &args.manifest {
        let mut out = std::fs::File::create(manifest_path)
            .map_err(|e| CliError::Input(format!("{}: {e}", manifest_path.display())))?;
        for record in &records {
            let line = serde_json::to_string(record)
                .map_err(|e| CliError::Input(format!("manifest encode: {e}")))?;
            writeln!(out, "{line}").map_err(|e| CliError::Input(e.to_string()))?;
        }
    }
    Ok(records)
}

/// Parses a JSONL manifest back into records.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line).map_err(|e| CliError::Input(format!("manifest parse: {e}")))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MetricsArgs {
    pub reference: PathBuf,
    pub test: PathBuf,
    /// Present: treat inputs as label masks with this class count.
    pub classes: Option<usize>,
    pub resize: bool,
}

/// Compares two images (or label masks) and returns the metric report that
/// the binary prints as JSON.
pub fn cmd_metrics(args: &MetricsArgs) -> Result<MetricReport> {
    match args.classes {
        None => {
            let reference = imageio::load_rgb(&args.reference)?;
            let mut test = imageio::load_rgb(&args.test)?;
            if test.shape() != reference.shape() {
                if !args.resize {
                    return Err(CliError::Input(format!(
                        "extent mismatch {:?} vs {:?}; pass --resize to compare anyway",
                        reference.shape(),
                        test.shape()
                    )));
                }
                let (h, w, _) = reference
                    .dims3()
                    .map_err(|e| CliError::Input(e.to_string()))?;
                test = crate::degrade::resize_bilinear(&test, h, w)
                    .map_err(|e| CliError::Input(e.to_string()))?;
            }
            let mse_v = mse(&reference, &test).map_err(|e| CliError::Input(e.to_string()))?;
            let ssim_v =
                ssim(&reference, &test, 255.0).map_err(|e| CliError::Input(e.to_string()))?;
            Ok(MetricReport {
                mse: mse_v,
                psnr_db: psnr_from_mse(mse_v, 255.0),
                ssim: ssim_v,
                dice: None,
                jaccard: None,
            })
        }
        Some(classes) => {
            let load = |path: &Path| -> Result<LabelMask> {
                let mask = imageio::load_mask(
                    path,
                    if classes <= 5 {
                        LabelSpace::Merged5
                    } else {
                        LabelSpace::Raw19
                    },
                )?;
                Ok(mask)
            };
            let reference = load(&args.reference)?;
            let test = load(&args.test)?;
            if (reference.height, reference.width) != (test.height, test.width) {
                return Err(CliError::Input(format!(
                    "mask extent mismatch {}x{} vs {}x{}",
                    reference.height, reference.width, test.height, test.width
                )));
            }
            let ref_hot =
                one_hot(&reference, classes).map_err(|e| CliError::Input(e.to_string()))?;
            let test_hot = one_hot(&test, classes).map_err(|e| CliError::Input(e.to_string()))?;
            let (dice, _, jaccard) =
                dice_jaccard(&test_hot, &ref_hot).map_err(|e| CliError::Input(e.to_string()))?;
            let as_gray =
                |m: &LabelMask| Tensor::from_fn(&[m.height, m.width, 1], |i| m.labels[i] as f32);
            let (ga, gb) = (as_gray(&reference), as_gray(&test));
            let mse_v = mse(&ga, &gb).map_err(|e| CliError::Input(e.to_string()))?;
            let ssim_v = ssim(&ga, &gb, 255.0).map_err(|e| CliError::Input(e.to_string()))?;
            Ok(MetricReport {
                mse: mse_v,
                psnr_db: psnr_from_mse(mse_v, 255.0),
                ssim: ssim_v,
                dice: Some(dice),
                jaccard: Some(jaccard),
            })
        }
    }
}

/// Reference totals from the architecture summaries the defaults target.
pub const MASK_GENERATOR_REFERENCE_PARAMS: usize = 5_416_159;
pub const SMFD_REFERENCE_PARAMS: usize = 7_532_601;

fn load_config(path: Option<&Path>) -> Result<NetConfig> {
    match path {
        None => Ok(NetConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            NetConfig::from_json(&text).map_err(|e| CliError::Input(e.to_string()))
        }
    }
}

/// Architecture summary: parameter totals (with the reference comparison)
/// and one line per top-level stage with its output shape.
pub fn cmd_net_summary(kind: NetKind, config_path: Option<&Path>) -> Result<String> {
    let config = load_config(config_path)?;
    let graph = build_network(kind, &config)?;
    let count = param_count(&graph);
    let reference = match kind {
        NetKind::MaskGenerator => MASK_GENERATOR_REFERENCE_PARAMS,
        NetKind::SmfdUnet => SMFD_REFERENCE_PARAMS,
    };
    let delta = 100.0 * (count.total as f64 - reference as f64) / reference as f64;
    let mut out = String::new();
    out.push_str(&format!("network: {kind:?}\n"));
    out.push_str(&format!(
        "parameters: total {} | trainable {} | non-trainable {}\n",
        count.total, count.trainable, count.non_trainable
    ));
    out.push_str(&format!(
        "reference total: {reference} (delta {delta:+.2}%)\n"
    ));
    out.push_str("stages:\n");
    for input in &graph.inputs {
        out.push_str(&format!(
            "  {:<24} {:>4} x {:>4} x {:>4}  (input)\n",
            input.name, input.shape[0], input.shape[1], input.shape[2]
        ));
    }
    let mut last_stage = String::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        let stage = node.id.split('.').next().unwrap_or(&node.id).to_string();
        let is_last_of_stage = graph
            .nodes
            .get(i + 1)
            .map(|next| !next.id.starts_with(&format!("{stage}.")) && next.id != stage)
            .unwrap_or(true);
        if is_last_of_stage && stage != last_stage {
            out.push_str(&format!(
                "  {:<24} {:>4} x {:>4} x {:>4}\n",
                stage, node.out_shape[0], node.out_shape[1], node.out_shape[2]
            ));
            last_stage = stage;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ForwardArgs {
    pub kind: NetKind,
    pub config: Option<PathBuf>,
    pub weights: PathBuf,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
    pub out: PathBuf,
}

/// Runs one inference pass and writes the output PNG. The mask generator
/// writes its argmax label map to `out` plus a contrast-stretched
/// visualization alongside it.
pub fn cmd_net_forward(args: &ForwardArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    let graph = build_network(args.kind, &config)?;
    let weights = NamedTensorStore::load(&args.weights)?;
    let rgb = imageio::load_rgb(&args.image)?;
    let (h, w, _) = rgb.dims3().map_err(|e| CliError::Input(e.to_string()))?;
    if (h, w) != (config.input_height, config.input_width) {
        return Err(CliError::Input(format!(
            "image is {h}x{w}, config expects {}x{}",
            config.input_height, config.input_width
        )));
    }
    let unit_rgb = rgb.map(|v| v / 255.0);

    let mut inputs: HashMap<String, Tensor<f32>> = HashMap::new();
    match args.kind {
        NetKind::MaskGenerator => {
            let gray =
                crate::maskops::grayscale(&unit_rgb).map_err(|e| CliError::Input(e.to_string()))?;
            inputs.insert("image".into(), batch_of_one(&gray));
        }
        NetKind::SmfdUnet => {
            inputs.insert("image".into(), batch_of_one(&unit_rgb));
            if config.mask_branch {
                let mask_path = args
                    .mask
                    .as_ref()
                    .ok_or_else(|| CliError::Input("smfd-unet forward requires --mask".into()))?;
                let mask = imageio::load_mask(mask_path, LabelSpace::Merged5)?;
                if (mask.height, mask.width) != (h, w) {
                    return Err(CliError::Input(format!(
                        "mask is {}x{}, image is {h}x{w}",
                        mask.height, mask.width
                    )));
                }
                let hot =
                    one_hot(&mask, config.classes).map_err(|e| CliError::Input(e.to_string()))?;
                inputs.insert("mask".into(), batch_of_one(&hot));
            }
        }
    }

    let (output, _) = forward(&graph, &weights, &inputs, ExecutionOptions::default())?;
    let single = unbatch(&output);
    match args.kind {
        NetKind::SmfdUnet => {
            imageio::save_unit_rgb(&args.out, &single)?;
        }
        NetKind::MaskGenerator => {
            let mask = crate::maskops::argmax_labels(&single, LabelSpace::Merged5)
                .map_err(|e| CliError::Input(e.to_string()))?;
            imageio::save_mask(&args.out, &mask)?;
            let vis_path = sibling_with_suffix(&args.out, "_vis");
            let stretch = 255.0 / (config.classes.max(2) - 1) as f32;
            let vis = Tensor::from_fn(&[mask.height, mask.width, 3], |i| {
                mask.labels[i / 3] as f32 * stretch
            });
            imageio::save_rgb(&vis_path, &vis)?;
        }
    }
    Ok(())
}

fn sibling_with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path.extension().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

fn batch_of_one(t: &Tensor<f32>) -> Tensor<f32> {
    let (h, w, c) = t.dims3().expect("rank-3");
    t.reshape(&[1, h, w, c]).expect("lift to batch")
}

fn unbatch(t: &Tensor<f32>) -> Tensor<f32> {
    let (n, h, w, c) = t.dims4().expect("rank-4");
    assert_eq!(n, 1);
    t.reshape(&[h, w, c]).expect("drop batch")
}

#[derive(Debug, Clone)]
pub struct TrainSmokeArgs {
    pub kind: NetKind,
    pub config: Option<PathBuf>,
    pub steps: u64,
    pub seed: u64,
    pub trace: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

/// Runs the toy training loop on synthetic pairs and writes the trace CSV
/// and best checkpoint.
pub fn cmd_net_train_smoke(args: &TrainSmokeArgs) -> Result<(f64, f64)> {
    let config = match &args.config {
        Some(path) => load_config(Some(path))?,
        None => NetConfig::toy(),
    };
    let data = synthetic_pairs(8, config.input_height.min(config.input_width), args.seed);
    let report = train_smoke(args.kind, &config, &data, args.steps, args.seed)
        .map_err(|e| CliError::Model(e.to_string()))?;
    if let Some(path) = &args.trace {
        std::fs::write(path, report.trace_csv())
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.checkpoint {
        report.best_weights.save(path)?;
    }
    let first = report.trace.first().map(|r| r.loss).unwrap_or(0.0);
    let last = report.trace.last().map(|r| r.loss).unwrap_or(0.0);
    Ok((first, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::sample_plan;

    #[test]
    fn manifest_record_round_trips_plan() {
        let plan = sample_plan(1234);
        let record = ManifestRecord::from_plan("img.png", &plan);
        let json = serde_json::to_string(&record).unwrap();
        let back: ManifestRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(record, back);
        assert_eq!(back.to_plan(), plan);
    }

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(CliError::Input("x".into()).exit_code(), 2);
        assert_eq!(CliError::Model("x".into()).exit_code(), 3);
    }

    #[test]
    fn missing_input_dir_is_input_error() {
        let args = DegradeArgs {
            input: PathBuf::from("/nonexistent"),
            output: PathBuf::from("/tmp/out"),
            seed: 0,
            manifest: None,
            kernel_set: None,
            max_layers: None,
        };
        assert_eq!(cmd_degrade(&args).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn even_kernel_set_rejected() {
        let args = DegradeArgs {
            input: PathBuf::from("/tmp"),
            output: PathBuf::from("/tmp/out"),
            seed: 0,
            manifest: None,
            kernel_set: Some(vec![4]),
            max_layers: None,
        };
        assert!(cmd_degrade(&args).is_err());
    }
}
