//! Writes a synthetic dataset and prints how often segments were corrupted as
//! a function of their incompatible-neighbor fraction.
//!
//! cargo run --release --example synth_dataset -- [frames] [out_dir]

use segmeta::synth::{generate_frame_detailed, write_dataset, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let frames: usize = args.next().map_or(Ok(50), |s| s.parse())?;
    let out = args.next().unwrap_or_else(|| "synth-data".into());

    let config = SynthConfig::default();
    let manifest = write_dataset(&config, frames, out.as_ref())?;
    println!("wrote {} frames ({} classes) to {out}", manifest.frames.len(), manifest.num_classes);

    let mut buckets = [(0usize, 0usize); 5];
    for seed in 0..frames as u64 {
        for r in generate_frame_detailed(&config, seed)?.flips {
            let b = ((r.phi * 5.0) as usize).min(4);
            buckets[b].0 += usize::from(r.flipped);
            buckets[b].1 += 1;
        }
    }
    println!("phi bucket   segments  flip rate  expected");
    for (i, (flipped, n)) in buckets.iter().enumerate() {
        if *n == 0 {
            continue;
        }
        let mid = (i as f64 + 0.5) / 5.0;
        println!(
            "[{:.1}, {:.1})   {n:>8}  {:>9.3}  ~{:.3}",
            i as f64 / 5.0,
            (i + 1) as f64 / 5.0,
            *flipped as f64 / *n as f64,
            config.base_error + config.neighbor_error_gain * mid
        );
    }
    Ok(())
}
