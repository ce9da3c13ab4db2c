//! Trains one architecture on synthetic graphs, five seeds, and prints the
//! per-seed best epochs.
//!
//! cargo run --release --example train_model -- [cls|reg] [arch@lr=RATE] [frames]

use rayon::prelude::*;
use segmeta::arch::ArchitectureSpec;
use segmeta::graph::build_graph;
use segmeta::synth::{frame_id, generate_frame, SynthConfig};
use segmeta::trainer::{train_run, RunConfig, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let task = match args.next().as_deref() {
        Some("reg") => Task::Regression,
        _ => Task::Classification,
    };
    let arch: ArchitectureSpec = args.next().unwrap_or_else(|| "L373-S269-S1@lr=0.009".into()).parse()?;
    let frames: usize = args.next().map_or(Ok(100), |s| s.parse())?;

    let config = SynthConfig::default();
    let graphs = (0..frames)
        .into_par_iter()
        .map(|i| {
            let (p, gt) = generate_frame(&config, i as u64).map_err(|e| e.to_string())?;
            build_graph(&frame_id(i), &p, &gt).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let out = train_run(&RunConfig::new(task, arch), &graphs)?;
    for run in &out.runs {
        let r = &run.result;
        println!(
            "seed {}  best epoch {:>3}  {} {:.4}  final train loss {:.5}",
            r.seed,
            r.best_epoch,
            task.metric_name(),
            r.metrics.headline(task),
            run.log.last().unwrap().train_loss
        );
    }
    let m = out.report.summary.headline(task).unwrap();
    println!("{}: {} {:.2} ± {:.2} ({:.1}s)", out.report.name, task.metric_name(), 100.0 * m.mean, 100.0 * m.std, out.report.wall_time_secs);
    Ok(())
}
