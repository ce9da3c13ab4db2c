//! Neighbor-free baselines next to the default graph network.
//!
//! cargo run --release --example baselines -- [cls|reg] [frames]

use rayon::prelude::*;
use segmeta::baselines::{run_baselines, BaselineConfig};
use segmeta::graph::build_graph;
use segmeta::synth::{frame_id, generate_frame, SynthConfig};
use segmeta::trainer::{train_run, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let task = match args.next().as_deref() {
        Some("reg") => Task::Regression,
        _ => Task::Classification,
    };
    let frames: usize = args.next().map_or(Ok(100), |s| s.parse())?;

    let config = SynthConfig::default();
    let graphs = (0..frames)
        .into_par_iter()
        .map(|i| {
            let (p, gt) = generate_frame(&config, i as u64).map_err(|e| e.to_string())?;
            build_graph(&frame_id(i), &p, &gt).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let cfg = BaselineConfig::new(task);
    let mut reports = run_baselines(&cfg, &graphs)?;
    let mut with_edges = cfg.run.clone();
    with_edges.drop_edges = false;
    with_edges.arch = cfg.gnn_specs[1].clone();
    reports.push(train_run(&with_edges, &graphs)?.report);

    for r in &reports {
        let m = r.summary.headline(task).unwrap();
        println!("{:<28} {} {:6.2} ± {:.2}", r.name, task.metric_name(), 100.0 * m.mean, 100.0 * m.std);
    }
    Ok(())
}
