//! Parameter counting and deterministic weight initialization.

use super::blocks::CbamParams;
use super::{NamedTensorStore, NetKind, NetworkGraph, NodeKind, Result};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

/// Per-node parameter shapes as `(suffix, shape, trainable)` triples; the
/// single source of truth shared by counting and initialization.
fn node_params(kind: &NodeKind) -> Vec<(String, Vec<usize>, bool)> {
    match *kind {
        NodeKind::Conv {
            filter,
            in_ch,
            out_ch,
            ..
        }
        | NodeKind::TransposeConv {
            filter,
            in_ch,
            out_ch,
            ..
        } => vec![
            ("weight".into(), vec![filter, filter, in_ch, out_ch], true),
            ("bias".into(), vec![out_ch], true),
        ],
        NodeKind::BatchNorm { channels } => vec![
            ("gamma".into(), vec![channels], true),
            ("beta".into(), vec![channels], true),
            ("running_mean".into(), vec![channels], false),
            ("running_var".into(), vec![channels], false),
        ],
        NodeKind::Cbam {
            channels,
            reduction,
        } => CbamParams::<f32>::shapes(channels, reduction)
            .into_iter()
            .map(|(name, shape)| (name, shape, true))
            .collect(),
        NodeKind::Act { .. }
        | NodeKind::MaxPool { .. }
        | NodeKind::NearestUp { .. }
        | NodeKind::PixelShuffleUp { .. }
        | NodeKind::Concat
        | NodeKind::Add
        | NodeKind::Postprocess { .. } => Vec::new(),
    }
}

/// Sums parameter elements per node. Batch-norm gamma/beta count as
/// trainable, running statistics as non-trainable.
pub fn param_count(graph: &NetworkGraph) -> ParamCount {
    let mut trainable = 0usize;
    let mut non_trainable = 0usize;
    for node in &graph.nodes {
        for (_, shape, is_trainable) in node_params(&node.kind) {
            let elements: usize = shape.iter().product();
            if is_trainable {
                trainable += elements;
            } else {
                non_trainable += elements;
            }
        }
    }
    ParamCount {
        total: trainable + non_trainable,
        trainable,
        non_trainable,
    }
}

/// Independent recount by flat enumeration of a weight store, splitting on
/// the running-statistics suffixes.
pub fn count_store(store: &NamedTensorStore) -> ParamCount {
    let mut trainable = 0usize;
    let mut non_trainable = 0usize;
    for (name, tensor) in store.iter() {
        if name.ends_with(".running_mean") || name.ends_with(".running_var") {
            non_trainable += tensor.len();
        } else {
            trainable += tensor.len();
        }
    }
    ParamCount {
        total: trainable + non_trainable,
        trainable,
        non_trainable,
    }
}

/// Deterministic He-uniform initialization keyed by `(seed, node order)`.
///
/// Conv and CBAM weights draw from `U(-limit, limit)` with
/// `limit = sqrt(6 / fan_in)`; biases start at zero; batch-norm starts at
/// the identity transform. The SMFD image head's refinement bias starts at
/// 0.5 so the clamped output begins mid-range.
pub fn init_weights(graph: &NetworkGraph, seed: u64) -> Result<NamedTensorStore> {
    let mut store = NamedTensorStore::new();
    for (order, node) in graph.nodes.iter().enumerate() {
        let mut rng = SeededRng::new(derive_seed(seed, order as u64));
        for (suffix, shape, _) in node_params(&node.kind) {
            let name = format!("{}.{suffix}", node.id);
            let tensor = match suffix.as_str() {
                "gamma" | "running_var" => Tensor::filled(&shape, 1.0),
                "beta" | "running_mean" => Tensor::zeros(&shape),
                "bias" | "mlp1.bias" | "mlp2.bias" | "spatial.bias" => {
                    if graph.kind == NetKind::SmfdUnet
                        && node.id == "head.refine"
                        && suffix == "bias"
                    {
                        Tensor::filled(&shape, 0.5)
                    } else {
                        Tensor::zeros(&shape)
                    }
                }
                _ => {
                    if node.id == "head.refine" && suffix == "weight" {
                        // Refinement starts as a no-op: identity 1x1 conv.
                        let c = shape[2];
                        Tensor::from_fn(&shape, |i| ((i / c) == (i % c)) as u8 as f32)
                    } else {
                        // Weight tensors are (Fh, Fw, Cin, Cout).
                        let fan_in: usize = shape[..3.min(shape.len() - 1)].iter().product();
                        let limit = (6.0 / fan_in as f64).sqrt();
                        let count: usize = shape.iter().product();
                        let data: Vec<f32> = (0..count)
                            .map(|_| rng.uniform_range(-limit, limit) as f32)
                            .collect();
                        Tensor::new(&shape, data)?
                    }
                }
            };
            store.insert(&name, tensor)?;
        }
    }
    Ok(store)
}
