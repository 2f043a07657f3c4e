//! Network graphs: builders, forward/backward evaluation, parameter
//! counting, and weight I/O for the Mask Generator and SMFD-UNet.
//!
//! A [`NetworkGraph`] is a topologically ordered list of [`LayerNode`]s over
//! named inputs. Shapes are inferred at build time and checked again during
//! evaluation; weights live in a [`NamedTensorStore`] keyed by
//! `"{node_id}.{param}"`.

mod blocks;
mod build;
mod params;
mod run;
mod store;

pub use blocks::{
    cbam_backward, cbam_forward, postprocess_image, postprocess_image_backward, CbamCache,
    CbamGrads, CbamParams,
};
pub use build::{
    build_cbam, build_network, build_rdc, build_upsample_block, replace_cbam_with_identity,
    GraphBuilder,
};
pub use params::{count_store, init_weights, param_count, ParamCount};
pub use run::{backward, forward, Execution, ExecutionOptions, Gradients};
pub use store::{NamedTensorStore, WEIGHT_MAGIC};

use crate::tensor::{Activation, Padding, TensorError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("node {node}: {detail}")]
    Node { node: String, detail: String },
    #[error("missing weight {name} for node {node}")]
    MissingWeight { node: String, name: String },
    #[error("weight {name} has shape {actual:?}, node {node} expects {expected:?}")]
    WeightShape {
        node: String,
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("duplicate tensor name {0}")]
    DuplicateName(String),
    #[error("graph has no node or input named {0}")]
    UnknownId(String),
    #[error("missing graph input {0}")]
    MissingInput(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("weight container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Layer-node payload. Convolution weights are owned by the weight store,
/// not the graph; nodes carry structure only.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Conv {
        filter: usize,
        stride: usize,
        padding: Padding,
        in_ch: usize,
        out_ch: usize,
    },
    TransposeConv {
        filter: usize,
        stride: usize,
        in_ch: usize,
        out_ch: usize,
    },
    BatchNorm {
        channels: usize,
    },
    Act {
        kind: Activation,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    NearestUp {
        factor: usize,
    },
    PixelShuffleUp {
        factor: usize,
    },
    Cbam {
        channels: usize,
        reduction: usize,
    },
    Concat,
    Add,
    Postprocess {
        contrast: f32,
        brightness: f32,
        clamp: bool,
    },
}

/// One node of the DAG; `inputs` reference earlier node ids or graph inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    pub id: String,
    pub kind: NodeKind,
    pub inputs: Vec<String>,
    /// Declared output (H, W, C); the batch extent stays dynamic.
    pub out_shape: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSpec {
    pub name: String,
    /// (H, W, C).
    pub shape: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    MaskGenerator,
    SmfdUnet,
}

impl std::str::FromStr for NetKind {
    type Err = NetError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask-generator" | "mask_generator" => Ok(NetKind::MaskGenerator),
            "smfd-unet" | "smfd_unet" => Ok(NetKind::SmfdUnet),
            other => Err(NetError::Config(format!("unknown network kind {other:?}"))),
        }
    }
}

/// Topologically ordered DAG with named inputs and a single terminal output.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub kind: NetKind,
    pub nodes: Vec<LayerNode>,
    pub inputs: Vec<InputSpec>,
    pub output: String,
}

impl NetworkGraph {
    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn input(&self, name: &str) -> Option<&InputSpec> {
        self.inputs.iter().find(|i| i.name == name)
    }

    /// Checks id uniqueness, definition-before-use, terminal node identity,
    /// and that every node contributes to the output.
    pub fn validate(&self) -> Result<()> {
        let mut defined: Vec<&str> = self.inputs.iter().map(|i| i.name.as_str()).collect();
        for node in &self.nodes {
            if defined.contains(&node.id.as_str()) {
                return Err(NetError::DuplicateName(node.id.clone()));
            }
            for input in &node.inputs {
                if !defined.contains(&input.as_str()) {
                    return Err(NetError::Node {
                        node: node.id.clone(),
                        detail: format!("input {input} not defined earlier"),
                    });
                }
            }
            defined.push(node.id.as_str());
        }
        match self.nodes.last() {
            Some(last) if last.id == self.output => {}
            _ => {
                return Err(NetError::Config(format!(
                    "terminal node {} must be the last node",
                    self.output
                )))
            }
        }
        // Walk back from the output; every node must be visited.
        let mut needed: std::collections::HashSet<&str> =
            std::collections::HashSet::from([self.output.as_str()]);
        for node in self.nodes.iter().rev() {
            if needed.contains(node.id.as_str()) {
                for input in &node.inputs {
                    needed.insert(input.as_str());
                }
            }
        }
        for node in &self.nodes {
            if !needed.contains(node.id.as_str()) {
                return Err(NetError::Node {
                    node: node.id.clone(),
                    detail: "unreachable from the output".into(),
                });
            }
        }
        Ok(())
    }
}

/// Upsampling flavor of the decoder blocks; the attention variants gate the
/// skip connection with CBAM before fusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsampleKind {
    Traditional,
    AttentionTranspose,
    AttentionPixelshuffle,
}

/// Architecture hyperparameters. The JSON form mirrors these fields, all
/// optional with these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub stages: usize,
    pub base_channels: usize,
    /// Dense units per RDC block.
    pub rdc_depth: usize,
    /// Channels added by each dense unit.
    pub rdc_growth: usize,
    pub cbam_reduction: usize,
    pub classes: usize,
    pub upsample: UpsampleKind,
    pub postprocess: bool,
    /// SMFD-UNet only: build the semantic-mask encoder branch.
    pub mask_branch: bool,
    pub input_height: usize,
    pub input_width: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            stages: 4,
            base_channels: 32,
            rdc_depth: 3,
            rdc_growth: 16,
            cbam_reduction: 8,
            classes: 5,
            upsample: UpsampleKind::AttentionPixelshuffle,
            postprocess: true,
            mask_branch: true,
            input_height: 256,
            input_width: 256,
        }
    }
}

impl NetConfig {
    /// A small configuration for tests and smoke training.
    pub fn toy() -> Self {
        Self {
            stages: 3,
            base_channels: 4,
            rdc_depth: 1,
            rdc_growth: 2,
            cbam_reduction: 2,
            classes: 5,
            upsample: UpsampleKind::AttentionPixelshuffle,
            postprocess: false,
            mask_branch: true,
            input_height: 32,
            input_width: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("stages", self.stages),
            ("base_channels", self.base_channels),
            ("rdc_growth", self.rdc_growth),
            ("cbam_reduction", self.cbam_reduction),
            ("classes", self.classes),
            ("input_height", self.input_height),
            ("input_width", self.input_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(NetError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let config: NetConfig =
            serde_json::from_str(json).map_err(|e| NetError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
