//! Builds both toy networks, initializes weights, runs a forward pass, and
//! writes the outputs as PNGs.

use smfd::imageio::{save_mask, save_unit_rgb};
use smfd::maskops::{argmax_labels, LabelSpace};
use smfd::nets::{build_network, forward, init_weights, ExecutionOptions, NetConfig, NetKind};
use smfd::tensor::Tensor;
use std::collections::HashMap;

fn main() {
    let out_dir = std::env::temp_dir().join("smfd-examples");
    std::fs::create_dir_all(&out_dir).expect("create output dir");
    let config = NetConfig {
        input_height: 64,
        input_width: 64,
        ..NetConfig::toy()
    };

    for kind in [NetKind::MaskGenerator, NetKind::SmfdUnet] {
        let graph = build_network(kind, &config).unwrap();
        let weights = init_weights(&graph, 11).unwrap();
        let inputs: HashMap<String, Tensor<f32>> = graph
            .inputs
            .iter()
            .map(|spec| {
                let [h, w, c] = spec.shape;
                let t = Tensor::from_fn(&[1, h, w, c], |i| ((i * 31 % 97) as f32) / 97.0);
                (spec.name.clone(), t)
            })
            .collect();
        let (out, _) = forward(&graph, &weights, &inputs, ExecutionOptions::default()).unwrap();
        let (_, h, w, c) = out.dims4().unwrap();
        println!("{kind:?}: {} nodes, output {h}x{w}x{c}", graph.nodes.len());
        let single = out.reshape(&[h, w, c]).unwrap();
        match kind {
            NetKind::SmfdUnet => {
                save_unit_rgb(&out_dir.join("smfd_forward.png"), &single).unwrap();
            }
            NetKind::MaskGenerator => {
                let mask = argmax_labels(&single, LabelSpace::Merged5).unwrap();
                save_mask(&out_dir.join("mask_forward.png"), &mask).unwrap();
            }
        }
    }
    println!("wrote {}", out_dir.display());
}
