//! Compares backpropagated gradients with central finite differences for a
//! model on a random graph.
//!
//! cargo run --release --example gradient_check -- [arch] [nodes]

use ndarray::Array2;
use rand::Rng as _;
use segmeta::arch::ArchitectureSpec;
use segmeta::layers::Adjacency;
use segmeta::model::{GraphInput, Model};
use segmeta::nn::{mse_loss, ParamId, ParamStore};
use segmeta::rng::rng_from_seed;

fn loss(model: &Model, store: &ParamStore, input: &GraphInput, targets: &[f64]) -> f64 {
    mse_loss(&model.forward(store, input).unwrap().scores, targets).unwrap().0
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let arch = args.next().unwrap_or_else(|| "L6-L5-S4-G1".into());
    let nodes: usize = args.next().map_or(Ok(8), |s| s.parse())?;
    let in_features = 4;

    let mut rng = rng_from_seed(7);
    let features = Array2::from_shape_fn((nodes, in_features), |_| rng.random_range(-1.0..1.0));
    let edges: Vec<(u32, u32)> = (0..nodes as u32)
        .flat_map(|a| (a + 1..nodes as u32).map(move |b| (a, b)))
        .filter(|_| rng.random_bool(0.4))
        .collect();
    let input = GraphInput::new(features, Adjacency::from_edges(nodes, &edges));
    let targets: Vec<f64> = (0..nodes).map(|_| rng.random_range(0.0..1.0)).collect();

    let spec = ArchitectureSpec::parse(&arch, 0.01)?;
    let (model, mut store) = Model::init(&spec, in_features, 0)?;
    // Away from zero biases, so no ReLU sits exactly on its kink.
    for p in store.params_mut() {
        if p.name.ends_with("bias") {
            p.value.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
    }
    let cache = model.forward(&store, &input)?;
    let (_, d) = mse_loss(&cache.scores, &targets)?;
    model.backward(&mut store, &input, &cache, &d);

    let h = 1e-6;
    println!("{arch} on {nodes} nodes, {} edges", edges.len());
    for id in (0..store.params().len()).map(ParamId) {
        let grad = store.grad(id).clone();
        let mut worst = 0.0f64;
        for (idx, &analytic) in grad.indexed_iter() {
            let orig = store.value(id)[idx];
            store.value_mut(id)[idx] = orig + h;
            let plus = loss(&model, &store, &input, &targets);
            store.value_mut(id)[idx] = orig - h;
            let minus = loss(&model, &store, &input, &targets);
            store.value_mut(id)[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5));
        }
        println!("{:<24} {:>5} entries  max rel err {worst:.2e}", store.params()[id.0].name, grad.len());
    }
    Ok(())
}
