//! Random search over the architecture space on synthetic graphs; writes
//! results.csv and histograms.csv.
//!
//! cargo run --release --example architecture_search -- [budget] [frames] [out_dir]

use std::path::PathBuf;

use rayon::prelude::*;
use segmeta::graph::build_graph;
use segmeta::search::{run_search, write_histograms_csv, write_results_csv, SearchConfig};
use segmeta::synth::{frame_id, generate_frame, SynthConfig};
use segmeta::trainer::Task;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let budget: usize = args.next().map_or(Ok(20), |s| s.parse())?;
    let frames: usize = args.next().map_or(Ok(40), |s| s.parse())?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "search-out".into()));

    let config = SynthConfig::default();
    let graphs = (0..frames)
        .into_par_iter()
        .map(|i| {
            let (p, gt) = generate_frame(&config, i as u64).map_err(|e| e.to_string())?;
            build_graph(&frame_id(i), &p, &gt).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut search = SearchConfig::new(Task::Classification, budget);
    search.run.epochs = 50;
    let outcome = run_search(&search, &graphs)?;
    std::fs::create_dir_all(&out)?;
    write_results_csv(&outcome, &out.join("results.csv"))?;
    write_histograms_csv(&outcome, search.top_k, &out.join("histograms.csv"))?;
    for c in outcome.ranking.iter().take(10) {
        let metric = c.metric.map_or("diverged".into(), |m| format!("{m:.4}"));
        println!("{:>3}  {:<26} lr {:.4}  {metric}", c.rank, c.spec.layer_string(), c.spec.learning_rate);
    }
    println!("wrote {}", out.display());
    Ok(())
}
