//! Trains one architecture with and without segment-adjacency edges on a
//! synthetic dataset and reports the AUROC gap.
//!
//! cargo run --release --example neighbor_gain -- [frames] [arch] [lr]

use segmeta::arch::ArchitectureSpec;
use segmeta::graph::build_graph;
use segmeta::synth::{frame_id, generate_frame, SynthConfig};
use segmeta::trainer::{train_run, RunConfig, Task};
use rayon::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let frames: usize = args.next().map_or(Ok(300), |s| s.parse())?;
    let arch = args.next().unwrap_or_else(|| "L242-S1".into());
    let lr: f64 = args.next().map_or(Ok(0.002), |s| s.parse())?;

    let config = SynthConfig::default();
    let graphs = (0..frames)
        .into_par_iter()
        .map(|i| {
            let (probs, gt) = generate_frame(&config, i as u64)?;
            Ok(build_graph(&frame_id(i), &probs, &gt)?)
        })
        .collect::<Result<Vec<_>, Box<dyn std::error::Error + Send + Sync>>>()
        .map_err(|e| e.to_string())?;
    let nodes: usize = graphs.iter().map(|g| g.num_nodes()).sum();
    let positives: usize = graphs.iter().flat_map(|g| &g.iou0).map(|&l| l as usize).sum();
    println!("{frames} frames, {nodes} segments, IoU_0 = 1 rate {:.3}", positives as f64 / nodes as f64);

    let spec = ArchitectureSpec::parse(&arch, lr)?;
    let mut means = Vec::new();
    for drop_edges in [false, true] {
        let cfg = RunConfig {
            drop_edges,
            ..RunConfig::new(Task::Classification, spec.clone())
        };
        let out = train_run(&cfg, &graphs)?;
        let auroc = out.report.summary.auroc.expect("classification report");
        let per_seed: Vec<String> = out
            .report
            .seeds
            .iter()
            .map(|s| format!("{:.4}@{}", s.metrics.auroc.unwrap_or(f64::NAN), s.best_epoch))
            .collect();
        println!(
            "{:<24} AUROC {:.2} ± {:.2}  [{}]  {:.1}s",
            out.report.name,
            100.0 * auroc.mean,
            100.0 * auroc.std,
            per_seed.join(" "),
            out.report.wall_time_secs
        );
        means.push(auroc.mean);
    }
    println!("gap {:.2} pp", 100.0 * (means[0] - means[1]));
    Ok(())
}
