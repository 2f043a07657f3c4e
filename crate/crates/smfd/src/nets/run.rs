//! Deterministic graph evaluation and the reverse pass used for training.

use super::blocks::{
    cbam_backward, cbam_forward, postprocess_image, postprocess_image_backward, CbamCache,
    CbamParams,
};
use super::{NamedTensorStore, NetError, NetworkGraph, NodeKind, Result};
use crate::tensor::{
    activate, activate_backward, batchnorm, batchnorm_backward, conv2d, conv2d_backward,
    conv2d_transpose, conv2d_transpose_backward, pixel_shuffle, pool2d, pool2d_backward,
    space_to_depth, upsample_nearest, upsample_nearest_backward, BnMode, BnStats, ConvSpec,
    PoolMode, PoolSwitches, Tensor, DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM,
};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionOptions {
    pub bn_mode: BnMode,
    /// Force CBAM gates to 1, turning attention nodes into pass-throughs.
    pub cbam_identity: bool,
}

impl Default for ExecutionOptions {
    fn default() -> Self {
        Self {
            bn_mode: BnMode::Infer,
            cbam_identity: false,
        }
    }
}

impl ExecutionOptions {
    pub fn train() -> Self {
        Self {
            bn_mode: BnMode::Train,
            ..Self::default()
        }
    }
}

#[derive(Debug)]
enum NodeAux {
    Pool(PoolSwitches),
    Bn(BnStats<f32>),
    Cbam(Box<CbamCache<f32>>),
    /// Pre-clamp output of a clamping postprocess node.
    PreClamp(Tensor<f32>),
    None,
}

/// Cached per-node values from a forward pass, enough to run [`backward`].
#[derive(Debug)]
pub struct Execution {
    options: ExecutionOptions,
    values: HashMap<String, Tensor<f32>>,
    aux: HashMap<String, NodeAux>,
    /// Running-statistic updates produced by train-mode batch norm.
    pub updated_running: Vec<(String, BnStats<f32>)>,
}

impl Execution {
    pub fn value(&self, id: &str) -> Option<&Tensor<f32>> {
        self.values.get(id)
    }
}

fn weight<'s>(
    store: &'s NamedTensorStore,
    node: &str,
    param: &str,
    expected: &[usize],
) -> Result<&'s Tensor<f32>> {
    let name = format!("{node}.{param}");
    let tensor = store.get(&name).ok_or_else(|| NetError::MissingWeight {
        node: node.to_string(),
        name: name.clone(),
    })?;
    if tensor.shape() != expected {
        return Err(NetError::WeightShape {
            node: node.to_string(),
            name,
            expected: expected.to_vec(),
            actual: tensor.shape().to_vec(),
        });
    }
    Ok(tensor)
}

fn conv_spec(
    store: &NamedTensorStore,
    node: &str,
    filter: usize,
    stride: usize,
    padding: crate::tensor::Padding,
    in_ch: usize,
    out_ch: usize,
) -> Result<ConvSpec<f32>> {
    let w = weight(store, node, "weight", &[filter, filter, in_ch, out_ch])?;
    let b = weight(store, node, "bias", &[out_ch])?;
    Ok(ConvSpec::new(
        filter,
        filter,
        in_ch,
        out_ch,
        stride,
        padding,
        w.clone(),
        b.clone(),
    )?)
}

fn cbam_params(
    store: &NamedTensorStore,
    node: &str,
    channels: usize,
    reduction: usize,
) -> Result<CbamParams<f32>> {
    let shapes = CbamParams::<f32>::shapes(channels, reduction);
    Ok(CbamParams {
        mlp1_w: weight(store, node, &shapes[0].0, &shapes[0].1)?.clone(),
        mlp1_b: weight(store, node, &shapes[1].0, &shapes[1].1)?.clone(),
        mlp2_w: weight(store, node, &shapes[2].0, &shapes[2].1)?.clone(),
        mlp2_b: weight(store, node, &shapes[3].0, &shapes[3].1)?.clone(),
        spatial_w: weight(store, node, &shapes[4].0, &shapes[4].1)?.clone(),
        spatial_b: weight(store, node, &shapes[5].0, &shapes[5].1)?.clone(),
    })
}

/// Topological evaluation of a graph over named inputs. Output shape of each
/// node is checked against the builder's declaration.
pub fn forward(
    graph: &NetworkGraph,
    weights: &NamedTensorStore,
    inputs: &HashMap<String, Tensor<f32>>,
    options: ExecutionOptions,
) -> Result<(Tensor<f32>, Execution)> {
    graph.validate()?;
    let mut values: HashMap<String, Tensor<f32>> = HashMap::new();
    let mut batch = None;
    for spec in &graph.inputs {
        let tensor = inputs
            .get(&spec.name)
            .ok_or_else(|| NetError::MissingInput(spec.name.clone()))?;
        let (n, h, w, c) = tensor.dims4()?;
        if [h, w, c] != spec.shape {
            return Err(NetError::Node {
                node: spec.name.clone(),
                detail: format!("input shape {:?}, expected {:?}", [h, w, c], spec.shape),
            });
        }
        match batch {
            None => batch = Some(n),
            Some(b) if b == n => {}
            Some(b) => {
                return Err(NetError::Node {
                    node: spec.name.clone(),
                    detail: format!("batch {n} differs from {b}"),
                })
            }
        }
        values.insert(spec.name.clone(), tensor.clone());
    }

    let mut aux: HashMap<String, NodeAux> = HashMap::new();
    let mut updated_running = Vec::new();
    for node in &graph.nodes {
        let input = |i: usize| -> &Tensor<f32> { &values[&node.inputs[i]] };
        let (out, node_aux) = match &node.kind {
            NodeKind::Conv {
                filter,
                stride,
                padding,
                in_ch,
                out_ch,
            } => {
                let spec = conv_spec(
                    weights, &node.id, *filter, *stride, *padding, *in_ch, *out_ch,
                )?;
                (conv2d(input(0), &spec)?, NodeAux::None)
            }
            NodeKind::TransposeConv {
                filter,
                stride,
                in_ch,
                out_ch,
            } => {
                let spec = conv_spec(
                    weights,
                    &node.id,
                    *filter,
                    *stride,
                    crate::tensor::Padding::Valid,
                    *in_ch,
                    *out_ch,
                )?;
                (conv2d_transpose(input(0), &spec)?, NodeAux::None)
            }
            NodeKind::BatchNorm { channels } => {
                let gamma = weight(weights, &node.id, "gamma", &[*channels])?.clone();
                let beta = weight(weights, &node.id, "beta", &[*channels])?.clone();
                let running = BnStats {
                    mean: weight(weights, &node.id, "running_mean", &[*channels])?.clone(),
                    var: weight(weights, &node.id, "running_var", &[*channels])?.clone(),
                };
                let result = batchnorm(
                    input(0),
                    &gamma,
                    &beta,
                    options.bn_mode,
                    DEFAULT_BN_EPS as f32,
                    Some(&running),
                    DEFAULT_BN_MOMENTUM as f32,
                )?;
                let stats = match options.bn_mode {
                    BnMode::Train => result.batch_stats.clone().expect("train stats"),
                    BnMode::Infer => running,
                };
                if let Some(updated) = result.updated_running {
                    updated_running.push((node.id.clone(), updated));
                }
                (result.output, NodeAux::Bn(stats))
            }
            NodeKind::Act { kind } => (activate(input(0), *kind), NodeAux::None),
            NodeKind::MaxPool { window, stride } => {
                let (out, switches) = pool2d(input(0), *window, *stride, PoolMode::Max)?;
                (out, NodeAux::Pool(switches.expect("max pool switches")))
            }
            NodeKind::NearestUp { factor } => (upsample_nearest(input(0), *factor)?, NodeAux::None),
            NodeKind::PixelShuffleUp { factor } => {
                (pixel_shuffle(input(0), *factor)?, NodeAux::None)
            }
            NodeKind::Cbam {
                channels,
                reduction,
            } => {
                if options.cbam_identity {
                    (input(0).clone(), NodeAux::None)
                } else {
                    let params = cbam_params(weights, &node.id, *channels, *reduction)?;
                    let (out, cache) = cbam_forward(input(0), &params)?;
                    (out, NodeAux::Cbam(Box::new(cache)))
                }
            }
            NodeKind::Concat => {
                let tensors: Vec<&Tensor<f32>> = node.inputs.iter().map(|i| &values[i]).collect();
                (concat_channels(&tensors)?, NodeAux::None)
            }
            NodeKind::Add => (input(0).zip_map(input(1), |a, b| a + b)?, NodeAux::None),
            NodeKind::Postprocess {
                contrast,
                brightness,
                clamp,
            } => {
                let pre = postprocess_image(input(0), *contrast, *brightness)?;
                if *clamp {
                    let clamped = pre.map(|v| v.clamp(0.0, 1.0));
                    (clamped, NodeAux::PreClamp(pre))
                } else {
                    (pre, NodeAux::None)
                }
            }
        };
        let (n, h, w, c) = out.dims4()?;
        if [h, w, c] != node.out_shape {
            return Err(NetError::Node {
                node: node.id.clone(),
                detail: format!(
                    "produced shape {:?}, declared {:?}",
                    [n, h, w, c],
                    node.out_shape
                ),
            });
        }
        aux.insert(node.id.clone(), node_aux);
        values.insert(node.id.clone(), out);
    }

    let output = values[&graph.output].clone();
    Ok((
        output,
        Execution {
            options,
            values,
            aux,
            updated_running,
        },
    ))
}

fn concat_channels(tensors: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let (n, h, w, _) = tensors[0].dims4()?;
    let total: usize = tensors.iter().map(|t| t.shape()[3]).sum();
    let mut out = Tensor::zeros(&[n, h, w, total]);
    let mut offset = 0;
    for t in tensors {
        let (_, _, _, c) = t.dims4()?;
        for b in 0..n {
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        out.set4(b, y, x, offset + ch, t.at4(b, y, x, ch));
                    }
                }
            }
        }
        offset += c;
    }
    Ok(out)
}

/// Parameter and input gradients from one reverse pass.
pub struct Gradients {
    /// Keyed like the weight store ("node.param"). Batch-norm running stats
    /// do not appear here; they are updated by the forward pass.
    pub params: NamedTensorStore,
    /// Gradients with respect to each graph input.
    pub inputs: HashMap<String, Tensor<f32>>,
}

/// Reverse topological sweep. `grad_out` is the gradient of the loss with
/// respect to the graph output.
pub fn backward(
    graph: &NetworkGraph,
    weights: &NamedTensorStore,
    exec: &Execution,
    grad_out: &Tensor<f32>,
) -> Result<Gradients> {
    let mut grads: HashMap<String, Tensor<f32>> = HashMap::new();
    grads.insert(graph.output.clone(), grad_out.clone());
    let mut params = NamedTensorStore::new();

    let accumulate =
        |map: &mut HashMap<String, Tensor<f32>>, id: &str, g: Tensor<f32>| match map.get_mut(id) {
            None => {
                map.insert(id.to_string(), g);
            }
            Some(existing) => {
                *existing = existing
                    .zip_map(&g, |a, b| a + b)
                    .expect("grad shapes match");
            }
        };

    for node in graph.nodes.iter().rev() {
        let Some(grad) = grads.remove(&node.id) else {
            continue;
        };
        let value = |i: usize| -> &Tensor<f32> { &exec.values[&node.inputs[i]] };
        match &node.kind {
            NodeKind::Conv {
                filter,
                stride,
                padding,
                in_ch,
                out_ch,
            } => {
                let spec = conv_spec(
                    weights, &node.id, *filter, *stride, *padding, *in_ch, *out_ch,
                )?;
                let g = conv2d_backward(value(0), &spec, &grad)?;
                params.put(&format!("{}.weight", node.id), g.d_weights);
                params.put(&format!("{}.bias", node.id), g.d_bias);
                accumulate(&mut grads, &node.inputs[0], g.d_input);
            }
            NodeKind::TransposeConv {
                filter,
                stride,
                in_ch,
                out_ch,
            } => {
                let spec = conv_spec(
                    weights,
                    &node.id,
                    *filter,
                    *stride,
                    crate::tensor::Padding::Valid,
                    *in_ch,
                    *out_ch,
                )?;
                let g = conv2d_transpose_backward(value(0), &spec, &grad)?;
                params.put(&format!("{}.weight", node.id), g.d_weights);
                params.put(&format!("{}.bias", node.id), g.d_bias);
                accumulate(&mut grads, &node.inputs[0], g.d_input);
            }
            NodeKind::BatchNorm { channels } => {
                let gamma = weight(weights, &node.id, "gamma", &[*channels])?.clone();
                let NodeAux::Bn(stats) = &exec.aux[&node.id] else {
                    unreachable!("bn aux recorded in forward");
                };
                let g = batchnorm_backward(
                    value(0),
                    &gamma,
                    exec.options.bn_mode,
                    DEFAULT_BN_EPS as f32,
                    stats,
                    &grad,
                )?;
                params.put(&format!("{}.gamma", node.id), g.d_gamma);
                params.put(&format!("{}.beta", node.id), g.d_beta);
                accumulate(&mut grads, &node.inputs[0], g.d_input);
            }
            NodeKind::Act { kind } => {
                let out = &exec.values[&node.id];
                let g = activate_backward(*kind, value(0), out, &grad);
                accumulate(&mut grads, &node.inputs[0], g);
            }
            NodeKind::MaxPool { window, stride } => {
                let NodeAux::Pool(switches) = &exec.aux[&node.id] else {
                    unreachable!("pool aux recorded in forward");
                };
                let g = pool2d_backward(
                    value(0).shape(),
                    *window,
                    *stride,
                    PoolMode::Max,
                    Some(switches),
                    &grad,
                )?;
                accumulate(&mut grads, &node.inputs[0], g);
            }
            NodeKind::NearestUp { factor } => {
                let g = upsample_nearest_backward(&grad, *factor)?;
                accumulate(&mut grads, &node.inputs[0], g);
            }
            NodeKind::PixelShuffleUp { factor } => {
                let g = space_to_depth(&grad, *factor)?;
                accumulate(&mut grads, &node.inputs[0], g);
            }
            NodeKind::Cbam {
                channels,
                reduction,
            } => {
                if exec.options.cbam_identity {
                    accumulate(&mut grads, &node.inputs[0], grad);
                } else {
                    let p = cbam_params(weights, &node.id, *channels, *reduction)?;
                    let NodeAux::Cbam(cache) = &exec.aux[&node.id] else {
                        unreachable!("cbam aux recorded in forward");
                    };
                    let g = cbam_backward(&p, cache, &grad)?;
                    params.put(&format!("{}.mlp1.weight", node.id), g.d_mlp1_w);
                    params.put(&format!("{}.mlp1.bias", node.id), g.d_mlp1_b);
                    params.put(&format!("{}.mlp2.weight", node.id), g.d_mlp2_w);
                    params.put(&format!("{}.mlp2.bias", node.id), g.d_mlp2_b);
                    params.put(&format!("{}.spatial.weight", node.id), g.d_spatial_w);
                    params.put(&format!("{}.spatial.bias", node.id), g.d_spatial_b);
                    accumulate(&mut grads, &node.inputs[0], g.d_input);
                }
            }
            NodeKind::Concat => {
                let (n, h, w, _) = grad.dims4()?;
                let mut offset = 0;
                for input_id in &node.inputs {
                    let c = exec.values[input_id].shape()[3];
                    let mut piece = Tensor::zeros(&[n, h, w, c]);
                    for b in 0..n {
                        for y in 0..h {
                            for x in 0..w {
                                for ch in 0..c {
                                    piece.set4(b, y, x, ch, grad.at4(b, y, x, offset + ch));
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, input_id, piece);
                    offset += c;
                }
            }
            NodeKind::Add => {
                accumulate(&mut grads, &node.inputs[0], grad.clone());
                accumulate(&mut grads, &node.inputs[1], grad);
            }
            NodeKind::Postprocess {
                contrast, clamp, ..
            } => {
                let masked = if *clamp {
                    let NodeAux::PreClamp(pre) = &exec.aux[&node.id] else {
                        unreachable!("pre-clamp cached in forward");
                    };
                    grad.zip_map(pre, |g, p| if (0.0..=1.0).contains(&p) { g } else { 0.0 })?
                } else {
                    grad
                };
                let g = postprocess_image_backward(&masked, *contrast)?;
                accumulate(&mut grads, &node.inputs[0], g);
            }
        }
    }

    let mut input_grads = HashMap::new();
    for spec in &graph.inputs {
        if let Some(g) = grads.remove(&spec.name) {
            input_grads.insert(spec.name.clone(), g);
        }
    }
    Ok(Gradients {
        params,
        inputs: input_grads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{
        build_network, init_weights, replace_cbam_with_identity, GraphBuilder, NetConfig, NetKind,
    };
    use crate::tensor::{Activation, Padding};

    fn toy_inputs(graph: &NetworkGraph, batch: usize, seed: usize) -> HashMap<String, Tensor<f32>> {
        graph
            .inputs
            .iter()
            .map(|spec| {
                let [h, w, c] = spec.shape;
                let t = Tensor::from_fn(&[batch, h, w, c], |i| {
                    (((i * 131 + seed * 31) % 97) as f32) / 97.0
                });
                (spec.name.clone(), t)
            })
            .collect()
    }

    #[test]
    fn forward_is_deterministic_and_matches_declared_shapes() {
        for kind in [NetKind::MaskGenerator, NetKind::SmfdUnet] {
            let graph = build_network(kind, &NetConfig::toy()).unwrap();
            let weights = init_weights(&graph, 5).unwrap();
            let inputs = toy_inputs(&graph, 2, 0);
            let (a, exec) =
                forward(&graph, &weights, &inputs, ExecutionOptions::default()).unwrap();
            let (b, _) = forward(&graph, &weights, &inputs, ExecutionOptions::default()).unwrap();
            assert_eq!(a, b);
            // Every intermediate matches the builder's declaration.
            for node in &graph.nodes {
                let v = exec.value(&node.id).unwrap();
                let (n, h, w, c) = v.dims4().unwrap();
                assert_eq!(n, 2);
                assert_eq!([h, w, c], node.out_shape, "node {}", node.id);
            }
        }
    }

    #[test]
    fn smfd_output_is_in_unit_range() {
        let config = NetConfig {
            postprocess: true,
            ..NetConfig::toy()
        };
        let graph = build_network(NetKind::SmfdUnet, &config).unwrap();
        let weights = init_weights(&graph, 9).unwrap();
        let (out, _) = forward(
            &graph,
            &weights,
            &toy_inputs(&graph, 1, 3),
            ExecutionOptions::default(),
        )
        .unwrap();
        assert_eq!(out.shape()[3], 3);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn mask_generator_softmax_sums_to_one() {
        let graph = build_network(NetKind::MaskGenerator, &NetConfig::toy()).unwrap();
        let weights = init_weights(&graph, 2).unwrap();
        let (out, _) = forward(
            &graph,
            &weights,
            &toy_inputs(&graph, 1, 1),
            ExecutionOptions::default(),
        )
        .unwrap();
        let (_, h, w, c) = out.dims4().unwrap();
        for y in 0..h {
            for x in 0..w {
                let sum: f32 = (0..c).map(|ch| out.at4(0, y, x, ch)).sum();
                assert!((sum - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_weights_produce_postprocessed_zero_image() {
        let config = NetConfig {
            postprocess: true,
            ..NetConfig::toy()
        };
        let graph = build_network(NetKind::SmfdUnet, &config).unwrap();
        let mut weights = init_weights(&graph, 0).unwrap();
        let names: Vec<String> = weights.names().cloned().collect();
        for name in names {
            let shape = weights.get(&name).unwrap().shape().to_vec();
            // Keep running_var at 1 so inference-mode normalization is defined.
            let v = if name.ends_with("running_var") {
                1.0
            } else {
                0.0
            };
            weights.put(&name, Tensor::filled(&shape, v));
        }
        let (out, _) = forward(
            &graph,
            &weights,
            &toy_inputs(&graph, 1, 7),
            ExecutionOptions::default(),
        )
        .unwrap();
        // Zero image through (x - mu) * 2 + mu + 0.1 then clamp: all 0.1.
        assert!(out.data().iter().all(|&v| (v - 0.1).abs() < 1e-6));
    }

    #[test]
    fn linear_toy_graph_scales_with_weights() {
        // BN-free, ReLU-free graph: doubling conv weights doubles the output.
        let mut g = GraphBuilder::new();
        g.add_input("image", [8, 8, 2]).unwrap();
        g.add(
            "c1",
            NodeKind::Conv {
                filter: 3,
                stride: 1,
                padding: Padding::Same,
                in_ch: 2,
                out_ch: 3,
            },
            &["image"],
        )
        .unwrap();
        g.add(
            "a1",
            NodeKind::Act {
                kind: Activation::Linear,
            },
            &["c1"],
        )
        .unwrap();
        let out = g
            .add(
                "c2",
                NodeKind::Conv {
                    filter: 1,
                    stride: 1,
                    padding: Padding::Valid,
                    in_ch: 3,
                    out_ch: 1,
                },
                &["a1"],
            )
            .unwrap();
        let graph = g.finish(NetKind::SmfdUnet, &out).unwrap();
        let mut weights = NamedTensorStore::new();
        weights
            .insert(
                "c1.weight",
                Tensor::from_fn(&[3, 3, 2, 3], |i| ((i % 5) as f32 - 2.0) * 0.1),
            )
            .unwrap();
        weights.insert("c1.bias", Tensor::zeros(&[3])).unwrap();
        weights
            .insert(
                "c2.weight",
                Tensor::from_fn(&[1, 1, 3, 1], |i| (i as f32 + 1.0) * 0.2),
            )
            .unwrap();
        weights.insert("c2.bias", Tensor::zeros(&[1])).unwrap();
        let inputs: HashMap<String, Tensor<f32>> = HashMap::from([(
            "image".to_string(),
            Tensor::from_fn(&[1, 8, 8, 2], |i| ((i * 13 % 37) as f32) / 37.0),
        )]);
        let (once, _) = forward(&graph, &weights, &inputs, ExecutionOptions::default()).unwrap();
        // Scale every conv weight by 2: output scales by 2^2 = 4 (two convs).
        let names: Vec<String> = weights.names().cloned().collect();
        let mut doubled = NamedTensorStore::new();
        for name in names {
            let t = weights.get(&name).unwrap();
            let scaled = if name.ends_with("weight") {
                t.map(|v| v * 2.0)
            } else {
                t.clone()
            };
            doubled.put(&name, scaled);
        }
        let (four, _) = forward(&graph, &doubled, &inputs, ExecutionOptions::default()).unwrap();
        let scaled_once = once.map(|v| v * 4.0);
        assert!(scaled_once.max_abs_diff(&four) < 1e-4);
    }

    #[test]
    fn missing_weight_error_names_the_node() {
        let graph = build_network(NetKind::MaskGenerator, &NetConfig::toy()).unwrap();
        let weights = NamedTensorStore::new();
        let err = forward(
            &graph,
            &weights,
            &toy_inputs(&graph, 1, 0),
            ExecutionOptions::default(),
        )
        .unwrap_err();
        match err {
            NetError::MissingWeight { node, .. } => assert_eq!(node, "enc0.rdc.unit0.conv"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn forced_gates_match_cbam_free_graph() {
        let graph = build_network(NetKind::MaskGenerator, &NetConfig::toy()).unwrap();
        let weights = init_weights(&graph, 21).unwrap();
        let inputs = toy_inputs(&graph, 1, 5);
        let forced = forward(
            &graph,
            &weights,
            &inputs,
            ExecutionOptions {
                cbam_identity: true,
                ..ExecutionOptions::default()
            },
        )
        .unwrap()
        .0;
        let stripped = replace_cbam_with_identity(&graph);
        let ungated = forward(&stripped, &weights, &inputs, ExecutionOptions::default())
            .unwrap()
            .0;
        assert_eq!(forced, ungated);
    }

    #[test]
    fn whole_graph_gradient_matches_finite_differences() {
        // End-to-end f32 backward sanity on a tiny two-conv graph with a
        // max pool and ReLU, checked against central differences.
        let mut g = GraphBuilder::new();
        g.add_input("image", [4, 4, 1]).unwrap();
        g.add(
            "c1",
            NodeKind::Conv {
                filter: 3,
                stride: 1,
                padding: Padding::Same,
                in_ch: 1,
                out_ch: 2,
            },
            &["image"],
        )
        .unwrap();
        g.add(
            "r1",
            NodeKind::Act {
                kind: Activation::Relu,
            },
            &["c1"],
        )
        .unwrap();
        g.add(
            "p1",
            NodeKind::MaxPool {
                window: 2,
                stride: 2,
            },
            &["r1"],
        )
        .unwrap();
        let out = g
            .add(
                "c2",
                NodeKind::Conv {
                    filter: 1,
                    stride: 1,
                    padding: Padding::Valid,
                    in_ch: 2,
                    out_ch: 1,
                },
                &["p1"],
            )
            .unwrap();
        let graph = g.finish(NetKind::SmfdUnet, &out).unwrap();
        let weights = init_weights(&graph, 33).unwrap();
        let inputs: HashMap<String, Tensor<f32>> = HashMap::from([(
            "image".to_string(),
            Tensor::from_fn(&[1, 4, 4, 1], |i| ((i * 7 % 11) as f32) / 11.0 + 0.05),
        )]);
        let loss = |w: &NamedTensorStore| -> f32 {
            let (out, _) = forward(&graph, w, &inputs, ExecutionOptions::default()).unwrap();
            out.data().iter().sum()
        };
        let (out, exec) = forward(&graph, &weights, &inputs, ExecutionOptions::default()).unwrap();
        let ones = Tensor::filled(out.shape(), 1.0f32);
        let grads = backward(&graph, &weights, &exec, &ones).unwrap();
        for name in ["c1.weight", "c1.bias", "c2.weight", "c2.bias"] {
            let analytic = grads.params.get(name).unwrap();
            let base = weights.get(name).unwrap().clone();
            for e in 0..base.len() {
                let mut plus = weights.clone();
                let mut t = base.clone();
                t.data_mut()[e] += 1e-3;
                plus.put(name, t);
                let mut minus = weights.clone();
                let mut t = base.clone();
                t.data_mut()[e] -= 1e-3;
                minus.put(name, t);
                let numeric = (loss(&plus) - loss(&minus)) / 2e-3;
                let a = analytic.data()[e];
                assert!(
                    (a - numeric).abs() < 2e-2 * (1.0 + a.abs().max(numeric.abs())),
                    "{name}[{e}]: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }
}
