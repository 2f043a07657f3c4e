//! Graph construction: the RDC block, CBAM nodes, upsample blocks, and the
//! two full architectures.

use super::{
    InputSpec, LayerNode, NetConfig, NetError, NetKind, NetworkGraph, NodeKind, Result,
    UpsampleKind,
};
use crate::tensor::{Activation, Padding};
use std::collections::HashMap;

/// Incremental graph assembly with shape inference. Nodes are appended in
/// topological order; every `add` infers and records the output shape.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<LayerNode>,
    inputs: Vec<InputSpec>,
    shapes: HashMap<String, [usize; 3]>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_input(&mut self, name: &str, shape: [usize; 3]) -> Result<String> {
        if self.shapes.contains_key(name) {
            return Err(NetError::DuplicateName(name.to_string()));
        }
        self.inputs.push(InputSpec {
            name: name.to_string(),
            shape,
        });
        self.shapes.insert(name.to_string(), shape);
        Ok(name.to_string())
    }

    pub fn shape_of(&self, id: &str) -> Result<[usize; 3]> {
        self.shapes
            .get(id)
            .copied()
            .ok_or_else(|| NetError::UnknownId(id.to_string()))
    }

    pub fn channels_of(&self, id: &str) -> Result<usize> {
        Ok(self.shape_of(id)?[2])
    }

    /// Appends a node, inferring its output shape from its inputs.
    pub fn add(&mut self, id: &str, kind: NodeKind, inputs: &[&str]) -> Result<String> {
        if self.shapes.contains_key(id) {
            return Err(NetError::DuplicateName(id.to_string()));
        }
        let in_shapes: Vec<[usize; 3]> = inputs
            .iter()
            .map(|i| self.shape_of(i))
            .collect::<Result<_>>()?;
        let out_shape = infer_shape(id, &kind, &in_shapes)?;
        self.shapes.insert(id.to_string(), out_shape);
        self.nodes.push(LayerNode {
            id: id.to_string(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            out_shape,
        });
        Ok(id.to_string())
    }

    pub fn finish(self, kind: NetKind, output: &str) -> Result<NetworkGraph> {
        let graph = NetworkGraph {
            kind,
            nodes: self.nodes,
            inputs: self.inputs,
            output: output.to_string(),
        };
        graph.validate()?;
        Ok(graph)
    }
}

fn conv_extents(
    id: &str,
    h: usize,
    w: usize,
    filter: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    let ext = |dim: usize| -> Result<usize> {
        let padded = match padding {
            Padding::Explicit(p) => dim + 2 * p,
            Padding::Valid => dim,
            Padding::Same => {
                return Ok(dim.div_ceil(stride));
            }
        };
        if padded < filter {
            return Err(NetError::Node {
                node: id.to_string(),
                detail: format!("non-positive output extent: input {dim}, filter {filter}"),
            });
        }
        Ok((padded - filter) / stride + 1)
    };
    Ok((ext(h)?, ext(w)?))
}

fn infer_shape(id: &str, kind: &NodeKind, inputs: &[[usize; 3]]) -> Result<[usize; 3]> {
    let arity_error = |want: &str| NetError::Node {
        node: id.to_string(),
        detail: format!("expected {want} inputs, got {}", inputs.len()),
    };
    let single = || inputs.first().copied().ok_or_else(|| arity_error("1"));
    match *kind {
        NodeKind::Conv {
            filter,
            stride,
            padding,
            in_ch,
            out_ch,
        } => {
            let [h, w, c] = single()?;
            if c != in_ch {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!("conv expects {in_ch} channels, input has {c}"),
                });
            }
            let (oh, ow) = conv_extents(id, h, w, filter, stride, padding)?;
            Ok([oh, ow, out_ch])
        }
        NodeKind::TransposeConv {
            filter,
            stride,
            in_ch,
            out_ch,
        } => {
            let [h, w, c] = single()?;
            if c != in_ch {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!("transpose conv expects {in_ch} channels, input has {c}"),
                });
            }
            Ok([(h - 1) * stride + filter, (w - 1) * stride + filter, out_ch])
        }
        NodeKind::BatchNorm { channels } => {
            let [h, w, c] = single()?;
            if c != channels {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!("batchnorm over {channels} channels, input has {c}"),
                });
            }
            Ok([h, w, c])
        }
        NodeKind::Act { .. } | NodeKind::Postprocess { .. } => single(),
        NodeKind::Cbam {
            channels,
            reduction,
        } => {
            let [h, w, c] = single()?;
            if c != channels {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!("cbam over {channels} channels, input has {c}"),
                });
            }
            if reduction == 0 || channels % reduction != 0 {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!("reduction {reduction} does not divide {channels} channels"),
                });
            }
            Ok([h, w, c])
        }
        NodeKind::MaxPool { window, stride } => {
            let [h, w, c] = single()?;
            if window > h || window > w {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!(
                        "non-positive output extent: pooling {h}x{w} with window {window}"
                    ),
                });
            }
            Ok([(h - window) / stride + 1, (w - window) / stride + 1, c])
        }
        NodeKind::NearestUp { factor } => {
            let [h, w, c] = single()?;
            Ok([h * factor, w * factor, c])
        }
        NodeKind::PixelShuffleUp { factor } => {
            let [h, w, c] = single()?;
            if c % (factor * factor) != 0 {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!("channels {c} not divisible by {}", factor * factor),
                });
            }
            Ok([h * factor, w * factor, c / (factor * factor)])
        }
        NodeKind::Concat => {
            if inputs.len() < 2 {
                return Err(arity_error("2+"));
            }
            let [h, w, _] = inputs[0];
            let mut channels = 0;
            for &[ih, iw, ic] in inputs {
                if (ih, iw) != (h, w) {
                    return Err(NetError::Node {
                        node: id.to_string(),
                        detail: format!("concat extents differ: {h}x{w} vs {ih}x{iw}"),
                    });
                }
                channels += ic;
            }
            Ok([h, w, channels])
        }
        NodeKind::Add => {
            if inputs.len() != 2 {
                return Err(arity_error("2"));
            }
            if inputs[0] != inputs[1] {
                return Err(NetError::Node {
                    node: id.to_string(),
                    detail: format!("add shapes differ: {:?} vs {:?}", inputs[0], inputs[1]),
                });
            }
            Ok(inputs[0])
        }
    }
}

/// Residual Dense Convolution block.
///
/// `depth` densely connected conv/BN/ReLU units (unit `i` consumes the
/// concatenation of the block input and all prior unit outputs), a 1x1
/// fusion conv over the full concatenation, a residual 1x1 projection of
/// the block input, and a final ReLU over their sum. Returns the output id.
pub fn build_rdc(
    g: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    depth: usize,
    growth: usize,
    out_ch: usize,
) -> Result<String> {
    let in_ch = g.channels_of(input)?;
    let mut running = input.to_string();
    let mut running_ch = in_ch;
    for i in 0..depth {
        let conv = g.add(
            &format!("{prefix}.unit{i}.conv"),
            NodeKind::Conv {
                filter: 3,
                stride: 1,
                padding: Padding::Same,
                in_ch: running_ch,
                out_ch: growth,
            },
            &[&running],
        )?;
        let bn = g.add(
            &format!("{prefix}.unit{i}.bn"),
            NodeKind::BatchNorm { channels: growth },
            &[&conv],
        )?;
        let act = g.add(
            &format!("{prefix}.unit{i}.relu"),
            NodeKind::Act {
                kind: Activation::Relu,
            },
            &[&bn],
        )?;
        running = g.add(
            &format!("{prefix}.unit{i}.cat"),
            NodeKind::Concat,
            &[&running, &act],
        )?;
        running_ch += growth;
    }
    let fuse = g.add(
        &format!("{prefix}.fuse"),
        NodeKind::Conv {
            filter: 1,
            stride: 1,
            padding: Padding::Valid,
            in_ch: running_ch,
            out_ch,
        },
        &[&running],
    )?;
    let proj = g.add(
        &format!("{prefix}.proj"),
        NodeKind::Conv {
            filter: 1,
            stride: 1,
            padding: Padding::Valid,
            in_ch,
            out_ch,
        },
        &[input],
    )?;
    let add = g.add(&format!("{prefix}.add"), NodeKind::Add, &[&fuse, &proj])?;
    g.add(
        &format!("{prefix}.out"),
        NodeKind::Act {
            kind: Activation::Relu,
        },
        &[&add],
    )
}

/// Single CBAM node over `input`.
pub fn build_cbam(
    g: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    reduction: usize,
) -> Result<String> {
    let channels = g.channels_of(input)?;
    g.add(
        prefix,
        NodeKind::Cbam {
            channels,
            reduction,
        },
        &[input],
    )
}

/// Doubling upsample block followed by skip fusion.
///
/// Pixel-shuffle variant: 3x3 conv to `4 * out_ch` channels, depth-to-space,
/// ReLU. Transpose variant: 2x2 stride-2 transpose conv, ReLU. Traditional:
/// nearest x2 then 3x3 conv, ReLU. Attention variants gate the skip with
/// CBAM before concatenation; traditional concatenates the raw skip.
pub fn build_upsample_block(
    g: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    skip: &str,
    out_ch: usize,
    mode: UpsampleKind,
    reduction: usize,
) -> Result<String> {
    let in_ch = g.channels_of(input)?;
    let up = match mode {
        UpsampleKind::AttentionPixelshuffle => {
            let conv = g.add(
                &format!("{prefix}.conv"),
                NodeKind::Conv {
                    filter: 3,
                    stride: 1,
                    padding: Padding::Same,
                    in_ch,
                    out_ch: out_ch * 4,
                },
                &[input],
            )?;
            let shuffle = g.add(
                &format!("{prefix}.shuffle"),
                NodeKind::PixelShuffleUp { factor: 2 },
                &[&conv],
            )?;
            g.add(
                &format!("{prefix}.relu"),
                NodeKind::Act {
                    kind: Activation::Relu,
                },
                &[&shuffle],
            )?
        }
        UpsampleKind::AttentionTranspose => {
            let tconv = g.add(
                &format!("{prefix}.tconv"),
                NodeKind::TransposeConv {
                    filter: 2,
                    stride: 2,
                    in_ch,
                    out_ch,
                },
                &[input],
            )?;
            g.add(
                &format!("{prefix}.relu"),
                NodeKind::Act {
                    kind: Activation::Relu,
                },
                &[&tconv],
            )?
        }
        UpsampleKind::Traditional => {
            let nearest = g.add(
                &format!("{prefix}.nearest"),
                NodeKind::NearestUp { factor: 2 },
                &[input],
            )?;
            let conv = g.add(
                &format!("{prefix}.conv"),
                NodeKind::Conv {
                    filter: 3,
                    stride: 1,
                    padding: Padding::Same,
                    in_ch,
                    out_ch,
                },
                &[&nearest],
            )?;
            g.add(
                &format!("{prefix}.relu"),
                NodeKind::Act {
                    kind: Activation::Relu,
                },
                &[&conv],
            )?
        }
    };
    let fused_skip = match mode {
        UpsampleKind::Traditional => skip.to_string(),
        _ => build_cbam(g, &format!("{prefix}.skip_cbam"), skip, reduction)?,
    };
    g.add(
        &format!("{prefix}.cat"),
        NodeKind::Concat,
        &[&up, &fused_skip],
    )
}

struct EncoderOut {
    /// Pre-pool feature per stage, shallowest first.
    skips: Vec<String>,
    bottleneck: String,
}

fn build_encoder(
    g: &mut GraphBuilder,
    prefix: &str,
    input: &str,
    config: &NetConfig,
) -> Result<EncoderOut> {
    let mut skips = Vec::with_capacity(config.stages);
    let mut current = input.to_string();
    for s in 0..config.stages {
        let out_ch = config.base_channels << s;
        let rdc = build_rdc(
            g,
            &format!("{prefix}{s}.rdc"),
            &current,
            config.rdc_depth,
            config.rdc_growth,
            out_ch,
        )?;
        skips.push(rdc.clone());
        current = g.add(
            &format!("{prefix}{s}.pool"),
            NodeKind::MaxPool {
                window: 2,
                stride: 2,
            },
            &[&rdc],
        )?;
    }
    Ok(EncoderOut {
        skips,
        bottleneck: current,
    })
}

fn build_decoder(
    g: &mut GraphBuilder,
    bottleneck: &str,
    skips: &[String],
    config: &NetConfig,
) -> Result<String> {
    let mut current = bottleneck.to_string();
    for i in 0..config.stages {
        let out_ch = config.base_channels << (config.stages - 1 - i);
        let skip = &skips[config.stages - 1 - i];
        let cat = build_upsample_block(
            g,
            &format!("dec{i}.up"),
            &current,
            skip,
            out_ch,
            config.upsample,
            config.cbam_reduction,
        )?;
        if i + 1 < config.stages {
            current = build_rdc(
                g,
                &format!("dec{i}.rdc"),
                &cat,
                config.rdc_depth,
                config.rdc_growth,
                out_ch,
            )?;
        } else {
            // The last level is the final block: CBAM over the fused map,
            // then an RDC down to the base width.
            let cbam = build_cbam(g, "final.cbam", &cat, config.cbam_reduction)?;
            current = build_rdc(
                g,
                "final.rdc",
                &cbam,
                config.rdc_depth,
                config.rdc_growth,
                config.base_channels,
            )?;
        }
    }
    Ok(current)
}

/// Builds the requested architecture.
///
/// Mask generator: a single grayscale encoder of `stages` RDC+pool stages, a
/// decoder with attention-guided upsampling, final CBAM+RDC, then a 1x1
/// projection with channel softmax and a post-softmax 1x1 refinement that is
/// softmax-normalized again.
///
/// SMFD-UNet: parallel image and mask encoder branches fused stage-wise by
/// channel concatenation, the same decoder shape, final CBAM+RDC, a 1x1
/// projection to RGB plus a 1x1 refinement, then post-processing (when
/// enabled) and a clamp to [0, 1].
pub fn build_network(kind: NetKind, config: &NetConfig) -> Result<NetworkGraph> {
    config.validate()?;
    let (h, w) = (config.input_height, config.input_width);
    if h % (1 << config.stages) != 0 || w % (1 << config.stages) != 0 {
        return Err(NetError::Config(format!(
            "input {h}x{w} not divisible by 2^{}",
            config.stages
        )));
    }
    let mut g = GraphBuilder::new();
    match kind {
        NetKind::MaskGenerator => {
            let image = g.add_input("image", [h, w, 1])?;
            let enc = build_encoder(&mut g, "enc", &image, config)?;
            let trunk = build_decoder(&mut g, &enc.bottleneck, &enc.skips, config)?;
            let project = g.add(
                "head.project",
                NodeKind::Conv {
                    filter: 1,
                    stride: 1,
                    padding: Padding::Valid,
                    in_ch: config.base_channels,
                    out_ch: config.classes,
                },
                &[&trunk],
            )?;
            let softmax = g.add(
                "head.softmax",
                NodeKind::Act {
                    kind: Activation::Softmax,
                },
                &[&project],
            )?;
            let refine = g.add(
                "head.refine",
                NodeKind::Conv {
                    filter: 1,
                    stride: 1,
                    padding: Padding::Valid,
                    in_ch: config.classes,
                    out_ch: config.classes,
                },
                &[&softmax],
            )?;
            let renorm = g.add(
                "head.renorm",
                NodeKind::Act {
                    kind: Activation::Softmax,
                },
                &[&refine],
            )?;
            g.finish(kind, &renorm)
        }
        NetKind::SmfdUnet => {
            let image = g.add_input("image", [h, w, 3])?;
            let img_enc = build_encoder(&mut g, "img_enc", &image, config)?;
            let (skips, bottleneck) = if config.mask_branch {
                let mask = g.add_input("mask", [h, w, config.classes])?;
                let mask_enc = build_encoder(&mut g, "mask_enc", &mask, config)?;
                // Stage-wise fusion: concatenate matching stages on channels.
                let mut fused = Vec::with_capacity(config.stages);
                for s in 0..config.stages {
                    fused.push(g.add(
                        &format!("fuse{s}"),
                        NodeKind::Concat,
                        &[&img_enc.skips[s], &mask_enc.skips[s]],
                    )?);
                }
                let bottleneck = g.add(
                    "fuse_bottleneck",
                    NodeKind::Concat,
                    &[&img_enc.bottleneck, &mask_enc.bottleneck],
                )?;
                (fused, bottleneck)
            } else {
                (img_enc.skips, img_enc.bottleneck)
            };
            let trunk = build_decoder(&mut g, &bottleneck, &skips, config)?;
            let project = g.add(
                "head.project",
                NodeKind::Conv {
                    filter: 1,
                    stride: 1,
                    padding: Padding::Valid,
                    in_ch: config.base_channels,
                    out_ch: 3,
                },
                &[&trunk],
            )?;
            let refine = g.add(
                "head.refine",
                NodeKind::Conv {
                    filter: 1,
                    stride: 1,
                    padding: Padding::Valid,
                    in_ch: 3,
                    out_ch: 3,
                },
                &[&project],
            )?;
            let (contrast, brightness) = if config.postprocess {
                (2.0, 0.1)
            } else {
                (1.0, 0.0)
            };
            let out = g.add(
                "head.postprocess",
                NodeKind::Postprocess {
                    contrast,
                    brightness,
                    clamp: true,
                },
                &[&refine],
            )?;
            g.finish(kind, &out)
        }
    }
}

/// Rebuilds a graph with every CBAM node replaced by a linear pass-through.
/// Running the original graph with gates forced to 1 must match this graph
/// exactly; see the architecture property tests.
pub fn replace_cbam_with_identity(graph: &NetworkGraph) -> NetworkGraph {
    let mut out = graph.clone();
    for node in &mut out.nodes {
        if matches!(node.kind, NodeKind::Cbam { .. }) {
            node.kind = NodeKind::Act {
                kind: Activation::Linear,
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rdc_depth_zero_degenerates_to_fuse_plus_residual() {
        let mut g = GraphBuilder::new();
        g.add_input("x", [8, 8, 3]).unwrap();
        let out = build_rdc(&mut g, "rdc", "x", 0, 2, 6).unwrap();
        let graph = g.finish(NetKind::MaskGenerator, &out).unwrap();
        let kinds: Vec<&str> = graph
            .nodes
            .iter()
            .map(|n| n.id.rsplit('.').next().unwrap())
            .collect();
        assert_eq!(kinds, vec!["fuse", "proj", "add", "out"]);
        assert_eq!(graph.nodes.last().unwrap().out_shape, [8, 8, 6]);
    }

    #[test]
    fn rdc_unit_input_channels_grow_linearly() {
        // Counting oracle: unit i consumes in_ch + i * growth channels.
        let mut g = GraphBuilder::new();
        g.add_input("x", [16, 16, 10]).unwrap();
        let out = build_rdc(&mut g, "rdc", "x", 3, 4, 8).unwrap();
        let graph = g.finish(NetKind::MaskGenerator, &out).unwrap();
        for i in 0..3 {
            let node = graph.node(&format!("rdc.unit{i}.conv")).unwrap();
            match node.kind {
                NodeKind::Conv { in_ch, out_ch, .. } => {
                    assert_eq!(in_ch, 10 + i * 4);
                    assert_eq!(out_ch, 4);
                }
                _ => panic!("expected conv"),
            }
        }
    }

    #[test]
    fn rdc_preserves_spatial_extents() {
        for depth in 0..4 {
            let mut g = GraphBuilder::new();
            g.add_input("x", [12, 20, 5]).unwrap();
            let out = build_rdc(&mut g, "rdc", "x", depth, 3, 7).unwrap();
            assert_eq!(g.shape_of(&out).unwrap(), [12, 20, 7]);
        }
    }

    #[test]
    fn cbam_rejects_bad_reduction() {
        let mut g = GraphBuilder::new();
        g.add_input("x", [8, 8, 6]).unwrap();
        assert!(build_cbam(&mut g, "cbam", "x", 4).is_err());
    }

    #[test]
    fn upsample_block_shapes() {
        for mode in [
            UpsampleKind::Traditional,
            UpsampleKind::AttentionTranspose,
            UpsampleKind::AttentionPixelshuffle,
        ] {
            let mut g = GraphBuilder::new();
            g.add_input("deep", [8, 8, 16]).unwrap();
            g.add_input("skip", [16, 16, 12]).unwrap();
            let out = build_upsample_block(&mut g, "up", "deep", "skip", 6, mode, 2).unwrap();
            // Doubled extents, concat of upsampled (6) and skip (12) channels.
            assert_eq!(g.shape_of(&out).unwrap(), [16, 16, 18]);
        }
    }

    #[test]
    fn both_networks_build_and_declare_shapes() {
        let config = NetConfig::toy();
        let mask = build_network(NetKind::MaskGenerator, &config).unwrap();
        assert_eq!(
            mask.nodes.last().unwrap().out_shape,
            [32, 32, config.classes]
        );
        let smfd = build_network(NetKind::SmfdUnet, &config).unwrap();
        assert_eq!(smfd.nodes.last().unwrap().out_shape, [32, 32, 3]);
        assert_eq!(smfd.inputs.len(), 2);
    }

    #[test]
    fn full_size_terminal_shapes() {
        let config = NetConfig::default();
        let mask = build_network(NetKind::MaskGenerator, &config).unwrap();
        assert_eq!(mask.nodes.last().unwrap().out_shape, [256, 256, 5]);
        let smfd = build_network(NetKind::SmfdUnet, &config).unwrap();
        assert_eq!(smfd.nodes.last().unwrap().out_shape, [256, 256, 3]);
    }

    #[test]
    fn ablation_axes_are_config_only() {
        // The five ablation rows: backbone alone, plus mask branch under the
        // three upsample kinds, plus post-processing.
        let rows = [
            (false, UpsampleKind::AttentionPixelshuffle, false),
            (true, UpsampleKind::Traditional, false),
            (true, UpsampleKind::AttentionTranspose, false),
            (true, UpsampleKind::AttentionPixelshuffle, false),
            (true, UpsampleKind::AttentionPixelshuffle, true),
        ];
        for (mask_branch, upsample, postprocess) in rows {
            let config = NetConfig {
                mask_branch,
                upsample,
                postprocess,
                ..NetConfig::toy()
            };
            let graph = build_network(NetKind::SmfdUnet, &config).unwrap();
            assert_eq!(graph.inputs.len(), if mask_branch { 2 } else { 1 });
            let has_cbam = graph
                .nodes
                .iter()
                .any(|n| matches!(n.kind, NodeKind::Cbam { .. }));
            assert!(has_cbam, "final block always carries CBAM");
        }
    }

    #[test]
    fn undersized_input_rejected() {
        let config = NetConfig {
            input_height: 8,
            input_width: 8,
            stages: 4,
            ..NetConfig::toy()
        };
        assert!(build_network(NetKind::MaskGenerator, &config).is_err());
    }
}
