//! A short deterministic training run on synthetic pairs, the learning-rate
//! plateau scheduler, and early stopping driven by the observed metric.

use smfd::nets::{NetConfig, NetKind};
use smfd::train::{
    early_stop_step, plateau_step, synthetic_pairs, train_smoke, EarlyStopState, Monitored,
    PlateauState,
};

fn main() {
    let out_dir = std::env::temp_dir().join("smfd-examples");
    std::fs::create_dir_all(&out_dir).expect("create output dir");

    let config = NetConfig {
        stages: 2,
        base_channels: 2,
        rdc_depth: 1,
        rdc_growth: 2,
        cbam_reduction: 2,
        input_height: 16,
        input_width: 16,
        ..NetConfig::toy()
    };
    let data = synthetic_pairs(4, 16, 0);
    let report = train_smoke(NetKind::SmfdUnet, &config, &data, 40, 7).unwrap();
    println!("step  loss        ssim");
    for row in report.trace.iter().step_by(8) {
        println!("{:>4}  {:.6}  {:.4}", row.step, row.loss, row.metric);
    }
    println!(
        "best ssim {:.4} at step {}",
        report.best_metric, report.best_step
    );
    let trace_path = out_dir.join("trace.csv");
    std::fs::write(&trace_path, report.trace_csv()).unwrap();
    let ckpt_path = out_dir.join("best.smfdw");
    report.best_weights.save(&ckpt_path).unwrap();
    println!("trace -> {}", trace_path.display());
    println!("checkpoint -> {}", ckpt_path.display());

    // Feed the per-step metric into the schedule state machines.
    let mut plateau = PlateauState::new(Monitored::Ssim, 0.001);
    let mut early = EarlyStopState::default();
    for row in &report.trace {
        plateau = plateau_step(&plateau, row.metric);
        early = early_stop_step(&early, row.metric);
        if early.stopped {
            println!("early stop would fire at step {}", row.step);
            break;
        }
    }
    println!(
        "after the run: lr {:.2e}, stall {}, stopped {}",
        plateau.lr, plateau.stall, early.stopped
    );
}
