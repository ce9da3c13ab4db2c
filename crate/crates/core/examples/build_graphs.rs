//! Builds the segment graph of one synthetic frame and prints its nodes.
//!
//! cargo run --release --example build_graphs -- [frame_seed]

use segmeta::graph::build_graph;
use segmeta::synth::{generate_frame, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let config = SynthConfig::default();
    let (probs, gt) = generate_frame(&config, seed)?;
    let graph = build_graph("example", &probs, &gt)?;

    let col = |name: &str| graph.feature_names.iter().position(|n| n == name).unwrap();
    let (s, s_in, e, d) = (col("S"), col("S_in"), col("E"), col("D"));
    println!("{} segments, {} edges", graph.num_nodes(), graph.edges.len());
    println!("node      S   S_in  mean E  mean D  degree  IoU_adj  IoU_0");
    for (k, f) in graph.features.iter().enumerate() {
        let degree = graph.edges.iter().filter(|&&(a, b)| a as usize == k || b as usize == k).count();
        println!(
            "{k:>4} {:>6} {:>6} {:>7.3} {:>7.3} {degree:>7} {:>8.3} {:>6}",
            f[s], f[s_in], f[e], f[d], graph.iou_adj[k], graph.iou0[k]
        );
    }
    Ok(())
}
