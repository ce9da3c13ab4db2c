//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so every line is shown.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use segmeta::arch::ArchitectureSpec;
use segmeta::dataio::{LabelMask, ProbMap, UNLABELED};
use segmeta::features::feature_names;
use segmeta::graph::{adjusted_iou, build_graph, SegmentGraph};
use segmeta::layers::{gat_forward, sage_forward, Adjacency, Aggregation, HeadParams};
use segmeta::metrics::{auroc, f1, r2, PositiveClass};
use segmeta::model::{GraphInput, Model};
use segmeta::nn::{glorot_uniform, mse_loss, ParamId, ParamStore};
use segmeta::rng::{derive_seed, rng_from_seed, Rng};
use segmeta::search::{sample_architecture, SearchSpace};
use segmeta::segments::connected_components;
use segmeta::synth::{default_incompatibility, frame_id, generate_frame, SynthConfig};
use segmeta::trainer::{train_run, RunConfig, Task, TrainError};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// ---------------------------------------------------------------- C1

const FD_STEP: f64 = 1e-6;
const FD_TOL: f64 = 1e-5;
/// Gradient magnitudes below this are compared absolutely: with a 1e-6 step
/// the central difference carries ~1e-11 of rounding noise.
const FD_FLOOR: f64 = 1e-5;

fn random_graph(rng: &mut Rng, in_features: usize) -> (GraphInput, Vec<f64>) {
    let m = rng.random_range(3..=10);
    let features = Array2::from_shape_fn((m, in_features), |_| rng.random_range(-1.0..1.0));
    let mut edges = Vec::new();
    for a in 0..m as u32 {
        for b in a + 1..m as u32 {
            if rng.random_bool(0.4) {
                edges.push((a, b));
            }
        }
    }
    let targets = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    (GraphInput::new(features, Adjacency::from_edges(m, &edges)), targets)
}

/// Biases start at zero, which puts a ReLU input exactly on its kink whenever
/// a node's incoming activations are all zero; checking at random biases keeps
/// the loss differentiable at the test point.
fn randomize_biases(store: &mut ParamStore, rng: &mut Rng) {
    for p in store.params_mut() {
        if p.name.ends_with("bias") {
            p.value.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
    }
}

fn loss_at(model: &Model, store: &ParamStore, input: &GraphInput, t: &[f64]) -> f64 {
    mse_loss(&model.forward(store, input).unwrap().scores, t).unwrap().0
}

/// Worst relative error over every parameter entry of `arch` on `graphs` graphs.
fn gradient_check(arch: &str, graphs: u64) -> (f64, usize) {
    let spec = ArchitectureSpec::parse(arch, 0.01).unwrap();
    let in_features = 4;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for g in 0..graphs {
        let mut rng = rng_from_seed(derive_seed(101, g));
        let (input, t) = random_graph(&mut rng, in_features);
        let (model, mut store) = Model::init(&spec, in_features, g).unwrap();
        randomize_biases(&mut store, &mut rng);
        let cache = model.forward(&store, &input).unwrap();
        let (_, d) = mse_loss(&cache.scores, &t).unwrap();
        model.backward(&mut store, &input, &cache, &d);
        for id in (0..store.params().len()).map(ParamId) {
            let grad = store.grad(id).clone();
            for (idx, &analytic) in grad.indexed_iter() {
                let orig = store.value(id)[idx];
                store.value_mut(id)[idx] = orig + FD_STEP;
                let plus = loss_at(&model, &store, &input, &t);
                store.value_mut(id)[idx] = orig - FD_STEP;
                let minus = loss_at(&model, &store, &input, &t);
                store.value_mut(id)[idx] = orig;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
                worst = worst.max(err);
                checked += 1;
            }
        }
    }
    (worst, checked)
}

fn c1() -> Verdict {
    let start = Instant::now();
    let archs = ["L5-L1", "S5-S1", "X5-X1", "G5-G1", "L6-S1", "L6-S5-S1", "L6-L5-S4-G1"];
    let results: Vec<(&str, f64, usize)> = archs
        .par_iter()
        .map(|a| {
            let (w, n) = gradient_check(a, 20);
            (*a, w, n)
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let total: usize = results.iter().map(|r| r.2).sum();
    let per: Vec<String> = results.iter().map(|(a, w, _)| format!("{a} {w:.1e}")).collect();
    verdict(
        worst < FD_TOL && secs < 60.0,
        format!(
            "worst rel err {worst:.2e} < {FD_TOL:.0e} over {total} entries, 20 graphs each [{}], {secs:.1}s < 60s",
            per.join(", ")
        ),
    )
}

// ---------------------------------------------------------------- C2

/// Pixel sets of the 8-connected same-label components, found by flood fill;
/// `skip` labels belong to no component.
fn flood_components(h: usize, w: usize, labels: &[u16], skip: Option<u16>) -> Vec<(u16, HashSet<usize>)> {
    let mut seen = vec![false; h * w];
    let mut comps = Vec::new();
    for start in 0..h * w {
        if seen[start] || Some(labels[start]) == skip {
            continue;
        }
        let class = labels[start];
        let mut set = HashSet::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(p) = stack.pop() {
            set.insert(p);
            let (r, c) = ((p / w) as i64, (p % w) as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (nr, nc) = (r + dr, c + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let q = nr as usize * w + nc as usize;
                    if !seen[q] && labels[q] == class {
                        seen[q] = true;
                        stack.push(q);
                    }
                }
            }
        }
        comps.push((class, set));
    }
    comps
}

/// Adjusted IoU from literal pixel sets: `|k ∩ K'| / |k ∪ (K' \ ∪Q)|`.
fn oracle_iou(k: usize, pred: &[(u16, HashSet<usize>)], gt: &[(u16, HashSet<usize>)]) -> f64 {
    let (class, pixels) = &pred[k];
    let k_prime: HashSet<usize> = gt
        .iter()
        .filter(|(c, set)| c == class && !set.is_disjoint(pixels))
        .flat_map(|(_, set)| set.iter().copied())
        .collect();
    if k_prime.is_empty() {
        return 0.0;
    }
    let q_pixels: HashSet<usize> = pred
        .iter()
        .enumerate()
        .filter(|(i, (_, set))| *i != k && !set.is_disjoint(&k_prime))
        .flat_map(|(_, (_, set))| set.iter().copied())
        .collect();
    let inter = pixels.intersection(&k_prime).count();
    let k_minus_q: HashSet<usize> = k_prime.difference(&q_pixels).copied().collect();
    let union = pixels.union(&k_minus_q).count();
    inter as f64 / union as f64
}

/// Max deviation between `adjusted_iou` and the oracle over all predicted segments.
fn compare_iou(h: usize, w: usize, pred: &[u16], gt: &[u16]) -> f64 {
    let pred_map = connected_components(&LabelMask::new(h as u32, w as u32, pred.to_vec()).unwrap(), false);
    let gt_map = connected_components(&LabelMask::new(h as u32, w as u32, gt.to_vec()).unwrap(), true);
    let pred_sets = flood_components(h, w, pred, None);
    let gt_sets = flood_components(h, w, gt, Some(UNLABELED));
    assert_eq!(pred_sets.len(), pred_map.num_segments());
    let mut worst = 0.0f64;
    for k in 0..pred_map.num_segments() {
        let first = pred_map.seg_pixels[k][0] as usize;
        let o = pred_sets.iter().position(|(_, s)| s.contains(&first)).unwrap();
        assert_eq!(pred_sets[o].1.len(), pred_map.seg_pixels[k].len());
        worst = worst.max((adjusted_iou(k, &pred_map, &gt_map) - oracle_iou(o, &pred_sets, &gt_sets)).abs());
    }
    worst
}

/// Blocky random labels: 4x4 blocks of random class with per-pixel noise.
fn blocky(rng: &mut Rng, n: usize, q: u16, noise: f64) -> Vec<u16> {
    let blocks: Vec<u16> = (0..(n / 4) * (n / 4)).map(|_| rng.random_range(0..q)).collect();
    (0..n * n)
        .map(|p| {
            if rng.random_bool(noise) {
                rng.random_range(0..q)
            } else {
                blocks[(p / n / 4) * (n / 4) + (p % n) / 4]
            }
        })
        .collect()
}

fn c2() -> Verdict {
    // Worked 1x6 examples: GT [A,A,A,A,B,B].
    let gt6 = [0u16, 0, 0, 0, 1, 1];
    let pred_a = [0u16, 0, 0, 1, 1, 1];
    let pred_b = [0u16, 0, 0, 0, 0, 1];
    let seg = |labels: &[u16], gt: bool| connected_components(&LabelMask::new(1, 6, labels.to_vec()).unwrap(), gt);
    let ex1 = adjusted_iou(0, &seg(&pred_a, false), &seg(&gt6, true));
    let ex2 = adjusted_iou(0, &seg(&pred_b, false), &seg(&gt6, true));
    let examples_ok = (ex1 - 1.0).abs() < 1e-12 && (ex2 - 0.8).abs() < 1e-12;

    let mut worst = compare_iou(1, 6, &pred_a, &gt6).max(compare_iou(1, 6, &pred_b, &gt6));
    let mut rng = rng_from_seed(202);
    let n = 32;
    for i in 0..200 {
        let mut gt = blocky(&mut rng, n, 4, 0.05);
        if i % 4 == 0 {
            // An unlabeled rectangle in every fourth mask.
            let (r0, c0) = (rng.random_range(0..n - 8), rng.random_range(0..n - 8));
            for r in r0..r0 + 8 {
                for c in c0..c0 + 8 {
                    gt[r * n + c] = UNLABELED;
                }
            }
        }
        let pred: Vec<u16> = if i % 2 == 0 {
            // Perturbed ground truth.
            gt.iter()
                .map(|&g| {
                    if g == UNLABELED || rng.random_bool(0.1) {
                        rng.random_range(0..4)
                    } else {
                        g
                    }
                })
                .collect()
        } else {
            blocky(&mut rng, n, 4, 0.1)
        };
        worst = worst.max(compare_iou(n, n, &pred, &gt));
    }
    verdict(
        examples_ok && worst <= 1e-12,
        format!("1x6 examples {ex1} and {ex2}; max |optimized - pixel-set oracle| = {worst:.1e} over 200 random 32x32 masks (q=4)"),
    )
}

// ---------------------------------------------------------------- C3

fn shuffled(adj: &Adjacency, rng: &mut Rng) -> Adjacency {
    let mut neighbors = adj.neighbors.clone();
    for list in &mut neighbors {
        list.shuffle(rng);
    }
    Adjacency { neighbors }
}

fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c3() -> Verdict {
    let mut rng = rng_from_seed(303);
    let mut layer_worst = 0.0f64;
    let mut relabel_worst = 0.0f64;
    let archs = ["L6-L1", "S6-S1", "X6-X1", "G6-G1", "L6-S1", "L6-S5-S1", "L6-L5-S4-G1", "G5@h2-X4-S1"];
    for trial in 0..30u64 {
        let (input, _) = random_graph(&mut rng, 5);
        let m = input.num_nodes();
        let h = &input.features;
        let other = shuffled(&input.adjacency, &mut rng);

        let w = glorot_uniform(10, 3, 10, 3, &mut rng);
        let b = Array2::from_shape_fn((1, 3), |_| rng.random_range(-0.5..0.5));
        for agg in [Aggregation::Mean, Aggregation::Max] {
            let (o1, _) = sage_forward(h, &input.adjacency, &w, &b, agg).unwrap();
            let (o2, _) = sage_forward(h, &other, &w, &b, agg).unwrap();
            layer_worst = layer_worst.max(max_diff(&o1, &o2));
        }
        let ws: Vec<Array2<f64>> = (0..3).map(|_| glorot_uniform(5, 3, 5, 3, &mut rng)).collect();
        let atts: Vec<Array2<f64>> = (0..3).map(|_| glorot_uniform(6, 1, 6, 1, &mut rng)).collect();
        let heads: Vec<HeadParams> = ws
            .iter()
            .zip(&atts)
            .map(|(weight, attention)| HeadParams { weight, attention })
            .collect();
        let (o1, _) = gat_forward(h, &input.adjacency, &heads, &b).unwrap();
        let (o2, _) = gat_forward(h, &other, &heads, &b).unwrap();
        layer_worst = layer_worst.max(max_diff(&o1, &o2));

        // Relabel nodes: node i becomes perm[i].
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);
        let mut features = Array2::zeros(h.dim());
        for i in 0..m {
            features.row_mut(perm[i]).assign(&h.row(i));
        }
        let edges: Vec<(u32, u32)> = input
            .adjacency
            .neighbors
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .map(|(a, b)| (perm[a] as u32, perm[b] as u32))
            .collect();
        let relabeled = GraphInput::new(features, Adjacency::from_edges(m, &edges));
        let shuffled_input = GraphInput::new(h.clone(), other.clone());
        for arch in archs {
            let spec = ArchitectureSpec::parse(arch, 0.01).unwrap();
            let (model, store) = Model::init(&spec, 5, trial).unwrap();
            let s = model.predict(&store, &input).unwrap();
            let s_shuf = model.predict(&store, &shuffled_input).unwrap();
            let s_perm = model.predict(&store, &relabeled).unwrap();
            for i in 0..m {
                layer_worst = layer_worst.max((s[i] - s_shuf[i]).abs());
                relabel_worst = relabel_worst.max((s[i] - s_perm[perm[i]]).abs());
            }
        }
    }
    verdict(
        layer_worst <= 1e-12 && relabel_worst <= 1e-12,
        format!(
            "neighbor-order change {layer_worst:.1e} <= 1e-12 (SAGE mean/max, GAT, 8 models); node relabeling {relabel_worst:.1e} <= 1e-12; 30 graphs"
        ),
    )
}

// ---------------------------------------------------------------- C4

fn pairwise_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut twice, mut p, mut n) = (0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li == 1 {
            p += 1;
        } else {
            n += 1;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                if scores[i] > scores[j] {
                    twice += 2;
                } else if scores[i] == scores[j] {
                    twice += 1;
                }
            }
        }
    }
    twice as f64 / (2.0 * p as f64 * n as f64)
}

fn c4() -> Verdict {
    let mut rng = rng_from_seed(404);
    let mut mismatches = 0;
    for i in 0..100 {
        let n = rng.random_range(2..300);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random();
                // Half the instances are coarsely quantized to force ties.
                if i % 2 == 0 {
                    (s * 10.0).floor() / 10.0
                } else {
                    s
                }
            })
            .collect();
        if auroc(&scores, &labels).unwrap() != pairwise_auroc(&scores, &labels) {
            mismatches += 1;
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let t = [0.0, 0.0, 1.0, 1.0];
    let r2_ok = close(r2(&t, &t).unwrap(), 1.0)
        && close(r2(&[0.5; 4], &t).unwrap(), 0.0)
        && close(r2(&[0.1, 0.2, 0.7, 0.8], &t).unwrap(), 0.82)
        && r2(&[0.1, 0.2], &[0.3, 0.3]).is_err();
    let labels = [1u8, 0, 0];
    let one = PositiveClass::Iou0IsOne;
    let f1_ok = close(f1(&[0.9, 0.1, 0.2], &labels, 0.5, one).unwrap(), 1.0)
        && close(f1(&[0.9, 0.8, 0.1], &labels, 0.5, one).unwrap(), 2.0 / 3.0)
        && close(f1(&[0.1, 0.1, 0.1], &labels, 0.5, one).unwrap(), 0.0);
    let auroc_examples = auroc(&[0.1, 0.9], &[0, 1]).unwrap() == 1.0
        && auroc(&[0.4; 6], &[0, 1, 1, 0, 1, 0]).unwrap() == 0.5
        && auroc(&[0.2, 0.4], &[1, 1]).is_err();
    verdict(
        mismatches == 0 && r2_ok && f1_ok && auroc_examples,
        format!(
            "auroc vs O(N^2) pairwise: {mismatches}/100 mismatches (exact); auroc examples {auroc_examples}; r2 examples {r2_ok}; f1 examples {f1_ok}"
        ),
    )
}

// ---------------------------------------------------------------- C5

fn default_graphs(frames: usize) -> Vec<SegmentGraph> {
    let config = SynthConfig::default();
    (0..frames)
        .into_par_iter()
        .map(|i| {
            let (probs, gt) = generate_frame(&config, i as u64).unwrap();
            build_graph(&frame_id(i), &probs, &gt).unwrap()
        })
        .collect()
}

/// AUROC of the visible neighbor-incompatibility fraction (higher fraction,
/// lower score); shows how much neighbor signal reaches the predicted graph.
fn neighbor_signal_auroc(graphs: &[SegmentGraph]) -> f64 {
    let names = feature_names(8);
    let p0 = names.iter().position(|n| n == "p_mean_0").unwrap();
    let m = default_incompatibility(8);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for g in graphs {
        let class: Vec<usize> = g
            .features
            .iter()
            .map(|f| (0..8).max_by(|&a, &b| f[p0 + a].total_cmp(&f[p0 + b])).unwrap())
            .collect();
        let adj = Adjacency::from_edges(g.num_nodes(), &g.edges);
        for (k, ns) in adj.neighbors.iter().enumerate() {
            let bad = ns.iter().filter(|&&v| m[class[k]][class[v]] == 1).count();
            scores.push(-(bad as f64 / ns.len().max(1) as f64));
            labels.push(g.iou0[k]);
        }
    }
    auroc(&scores, &labels).unwrap()
}

fn c5() -> Verdict {
    let graphs = default_graphs(300);
    let spec = ArchitectureSpec::parse("L242-S1", 0.002).unwrap();
    let mut means = BTreeMap::new();
    let mut per_seed = BTreeMap::new();
    for drop_edges in [false, true] {
        let cfg = RunConfig {
            drop_edges,
            ..RunConfig::new(Task::Classification, spec.clone())
        };
        let report = train_run(&cfg, &graphs).unwrap().report;
        means.insert(drop_edges, 100.0 * report.summary.auroc.unwrap().mean);
        per_seed.insert(
            drop_edges,
            report
                .seeds
                .iter()
                .map(|s| format!("{:.2}", 100.0 * s.metrics.auroc.unwrap()))
                .collect::<Vec<_>>()
                .join("/"),
        );
    }
    let (with, without) = (means[&false], means[&true]);
    let gap = with - without;
    let signal = 100.0 * neighbor_signal_auroc(&graphs);
    verdict(
        gap >= 2.0 && with > 60.0 && without > 60.0,
        format!(
            "L242-S1 AUROC {with:.2} [{}] vs no edges {without:.2} [{}]: gap {gap:+.2} pp (need >= 2.00, both > 60); \
             visible neighbor-incompatibility alone scores {signal:.2}",
            per_seed[&false], per_seed[&true]
        ),
    )
}

// ---------------------------------------------------------------- C6

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_segmeta"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEGMETA_SEED")
        .env_remove("SEGMETA_OUT_DIR")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn c6() -> Verdict {
    let steps: [&[&str]; 3] = [
        &["synth", "--frames", "10", "--out", "data"],
        &["buildgraphs", "--data", "data", "--out", "graphs.jsonl"],
        &[
            "--out-dir", "run", "train", "--graphs", "graphs.jsonl", "--task", "cls", "--arch", "L242-S1", "--lr",
            "0.002", "--seeds", "1",
        ],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut snaps = Vec::new();
    for dir in &dirs {
        for args in steps {
            if let Err(e) = run_cli(dir.path(), args) {
                return verdict(false, format!("command failed: {e}"));
            }
        }
        snaps.push(snapshot(dir.path()));
    }
    let differing: Vec<&String> = snaps[0]
        .iter()
        .filter(|(k, v)| snaps[1].get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    let same_set = snaps[0].len() == snaps[1].len();
    verdict(
        differing.is_empty() && same_set,
        format!(
            "synth, buildgraphs, train --seeds 1 twice: {} files, {} differ{}",
            snaps[0].len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" {differing:?}") }
        ),
    )
}

// ---------------------------------------------------------------- C7

fn all_finite(g: &SegmentGraph) -> bool {
    g.features.iter().flatten().all(|v| v.is_finite()) && g.iou_adj.iter().all(|v| v.is_finite())
}

fn uniform_probs(h: u32, w: u32, q: u16, labels: &[u16]) -> ProbMap {
    let mut probs = Vec::new();
    for &l in labels {
        for c in 0..q {
            probs.push(if c == l { 0.7 } else { 0.3 / (q - 1) as f32 });
        }
    }
    ProbMap::new(h, w, q, probs).unwrap()
}

fn c7() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let names = feature_names(3);
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();

    // 1-pixel image.
    let p = ProbMap::new(1, 1, 3, vec![0.2, 0.5, 0.3]).unwrap();
    let g = build_graph("one", &p, &LabelMask::new(1, 1, vec![1]).unwrap()).unwrap();
    check(
        "1-pixel",
        g.num_nodes() == 1 && g.edges.is_empty() && g.iou_adj == vec![1.0] && all_finite(&g) && g.features[0][idx("S_in")] == 0.0,
    );

    // Single-segment frame, also through a model.
    let p = uniform_probs(4, 4, 3, &[2; 16]);
    let g = build_graph("single", &p, &LabelMask::new(4, 4, vec![2; 16]).unwrap()).unwrap();
    let spec = ArchitectureSpec::parse("L8-G4-S1", 0.01).unwrap();
    let (model, store) = Model::init(&spec, g.num_features(), 0).unwrap();
    let scores = model.predict(&store, &GraphInput::from_graph(&g)).unwrap();
    check(
        "single segment",
        g.num_nodes() == 1 && g.edges.is_empty() && g.iou0 == vec![1] && all_finite(&g) && scores[0].is_finite(),
    );

    // All-unlabeled ground truth.
    let labels: Vec<u16> = (0..16).map(|i| (i % 3) as u16).collect();
    let p = uniform_probs(4, 4, 3, &labels);
    let g = build_graph("unlabeled", &p, &LabelMask::new(4, 4, vec![UNLABELED; 16]).unwrap()).unwrap();
    check(
        "all-unlabeled GT",
        g.iou_adj.iter().all(|&v| v == 0.0) && g.iou0.iter().all(|&v| v == 0) && all_finite(&g),
    );

    // S_in = 0 segment: a 1x3 strip is all boundary.
    let p = ProbMap::new(1, 3, 3, vec![0.6, 0.3, 0.1, 0.8, 0.1, 0.1, 0.5, 0.25, 0.25]).unwrap();
    let g = build_graph("strip", &p, &LabelMask::new(1, 3, vec![0; 3]).unwrap()).unwrap();
    let f = &g.features[0];
    check(
        "S_in = 0",
        f[idx("S_in")] == 0.0 && f[idx("E_in")] == f[idx("E")] && f[idx("D_in")] == f[idx("D")] && all_finite(&g),
    );

    // One-class evaluation split and zero-variance regression target.
    let clean = SynthConfig {
        base_error: 0.0,
        neighbor_error_gain: 0.0,
        height: 32,
        width: 32,
        num_sites: 8,
        ..SynthConfig::default()
    };
    let graphs: Vec<SegmentGraph> = (0..10)
        .map(|i| {
            let (p, gt) = generate_frame(&clean, i).unwrap();
            build_graph(&frame_id(i as usize), &p, &gt).unwrap()
        })
        .collect();
    check("uncorrupted targets", graphs.iter().all(|g| g.iou0.iter().all(|&l| l == 1)));
    let arch = ArchitectureSpec::parse("L10-S1", 0.01).unwrap();
    let cls = RunConfig::new(Task::Classification, arch.clone());
    check(
        "one-class eval",
        matches!(train_run(&cls, &graphs), Err(TrainError::DegenerateSplit(_))),
    );
    let mut flat = graphs.clone();
    for g in &mut flat {
        g.iou_adj.iter_mut().for_each(|v| *v = 1.0);
    }
    let reg = RunConfig::new(Task::Regression, arch.clone());
    check(
        "zero-variance eval",
        matches!(train_run(&reg, &flat), Err(TrainError::DegenerateSplit(_))),
    );
    check(
        "too few frames",
        matches!(train_run(&cls, &graphs[..1]), Err(TrainError::TooFewFrames(1))),
    );

    // Isolated single-node graphs train to finite metrics.
    let singles: Vec<SegmentGraph> = (0..12)
        .map(|i| {
            let labels = [(i % 3) as u16];
            let p = ProbMap::new(1, 1, 3, {
                let mut v = vec![0.1f32; 3];
                v[labels[0] as usize] = 0.8;
                v
            })
            .unwrap();
            let gt = if i % 2 == 0 { labels[0] } else { (labels[0] + 1) % 3 };
            build_graph(&format!("s{i:02}"), &p, &LabelMask::new(1, 1, vec![gt]).unwrap()).unwrap()
        })
        .collect();
    let cfg = RunConfig {
        epochs: 20,
        seeds: vec![0],
        ..RunConfig::new(Task::Classification, ArchitectureSpec::parse("S10-G1", 0.01).unwrap())
    };
    match train_run(&cfg, &singles) {
        Ok(out) => check(
            "single-node graphs",
            out.runs[0].log.iter().all(|r| r.train_loss.is_finite())
                && out.report.seeds[0].metrics.auroc.is_some_and(f64::is_finite),
        ),
        Err(TrainError::DegenerateSplit(_)) => {}
        Err(e) => check(&format!("single-node graphs: {e}"), false),
    }

    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            "1-pixel, single-segment, all-unlabeled, S_in=0, one-class and zero-variance splits, single-node graphs: documented results, no NaN".into()
        } else {
            format!("failed: {failures:?}")
        },
    )
}

// ---------------------------------------------------------------- C8

fn c8() -> Verdict {
    let space = SearchSpace::default();
    let n = 100_000u64;
    let mut depth_counts = [0u64; 5];
    let mut out_of_bounds = 0;
    for i in 0..n {
        let spec = sample_architecture(&space, derive_seed(808, i));
        let d = spec.depth();
        let widths_ok = spec.layers[..d - 1].iter().all(|l| (10..=400).contains(&l.width));
        let ok = (2..=4).contains(&d)
            && widths_ok
            && spec.layers[d - 1].width == 1
            && (0.001..=0.2).contains(&spec.learning_rate)
            && spec.validate().is_ok();
        if !ok {
            out_of_bounds += 1;
        } else {
            depth_counts[d] += 1;
        }
    }
    let expected = n as f64 / 3.0;
    let worst_dev = (2..=4)
        .map(|d| (depth_counts[d] as f64 - expected).abs() / expected)
        .fold(0.0, f64::max);
    verdict(
        out_of_bounds == 0 && worst_dev <= 0.05,
        format!(
            "{n} samples, {out_of_bounds} out of bounds; depth counts 2:{} 3:{} 4:{}, max deviation from uniform {:.2}% <= 5%",
            depth_counts[2],
            depth_counts[3],
            depth_counts[4],
            100.0 * worst_dev
        ),
    )
}

// ---------------------------------------------------------------- main

fn main() {
    let start = Instant::now();
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("C1 gradient fidelity", c1),
        ("C2 IoU_adj oracle equivalence", c2),
        ("C3 permutation properties", c3),
        ("C4 metric oracles", c4),
        ("C5 neighbor-information gain", c5),
        ("C6 determinism", c6),
        ("C7 degenerate inputs", c7),
        ("C8 search-space conformance", c8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let t = Instant::now();
        let v = run();
        failed += usize::from(!v.pass);
        println!(
            "{} {name}: {} ({:.1}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    let total = start.elapsed().as_secs_f64();
    let budget_ok = total < 900.0;
    failed += usize::from(!budget_ok);
    println!(
        "{} C9 end-to-end budget: criteria 1-8 took {total:.1}s < 900s on {} worker threads",
        if budget_ok { "PASS" } else { "FAIL" },
        rayon::current_num_threads()
    );
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
