//! Scratch calibration runs (not part of the deliverable test suite).
use koopgraph::dmd::Truncation;
use koopgraph::dynamics::{DynamicKind, DynamicSpec};
use koopgraph::model::{Arch, LossKind};
use koopgraph::tasks::nodeclass::{logistic_baseline, run_node_classification};
use koopgraph::tasks::synth::synth_nodeclass;
use koopgraph::tasks::{ModelConfig, TrainConfig};

fn cfg(epochs: usize) -> ModelConfig {
    ModelConfig {
        arch: Arch::Standard,
        train: TrainConfig { lr: 0.02, weight_decay: 5e-4, dropout: 0.3, hidden_dim: 16, epochs, loss: LossKind::Ce },
    }
}
fn mean(v: &[f64]) -> f64 { v.iter().sum::<f64>() / v.len() as f64 }

fn sweep(d: usize, noise: f64, steps: usize) {
    let epochs = 200;
    let mut rows = vec![];
    for (label, p_in, p_out) in [("hom", 0.1, 0.01), ("het", 0.01, 0.1)] {
        for xi in [0.3, 0.7, 0.85, 0.95] {
            let mut accs = vec![]; let mut ranks = vec![];
            for seed in 0..5u64 {
                let ds = synth_nodeclass(200, 2, p_in, p_out, d, noise, seed).unwrap();
                let dynamic = DynamicSpec::new(DynamicKind::Gcn, steps).unwrap();
                let out = run_node_classification(&ds, &dynamic, Truncation::Energy(xi), &cfg(epochs), None, seed).unwrap();
                accs.push(out.test.accuracy); ranks.push(out.dmd.rank);
            }
            rows.push(format!("  {label} xi={xi}: mean={:.4} ranks={ranks:?}", mean(&accs)));
        }
    }
    let mut logs = vec![];
    for seed in 0..5u64 {
        let ds = synth_nodeclass(200, 2, 0.1, 0.01, d, noise, seed).unwrap();
        logs.push(logistic_baseline(&ds, 300, 0.05, seed).unwrap());
    }
    println!("d={d} noise={noise} steps={steps} | logistic(hom)={:.4}", mean(&logs));
    for r in rows { println!("{r}"); }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let d: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let noise: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    sweep(d, noise, steps);
}
