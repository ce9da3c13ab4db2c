use rayon::prelude::*;

use segmeta::arch::ArchitectureSpec;
use segmeta::baselines::{run_baselines, BaselineConfig};
use segmeta::dataio::{read_graph_jsonl, write_graph_jsonl, DatasetManifest};
use segmeta::graph::{build_dataset_graphs, build_graph, GraphSummary, SegmentGraph};
use segmeta::model::{GraphInput, Model};
use segmeta::nn::{mse_loss, Adam};
use segmeta::search::{run_search, write_histograms_csv, write_results_csv, SearchConfig};
use segmeta::segments::{argmax_prediction, connected_components};
use segmeta::synth::{frame_id, generate_frame, generate_frame_detailed, write_dataset, SynthConfig};
use segmeta::trainer::{train_run, RunConfig, Summary, Task};

fn small_config() -> SynthConfig {
    SynthConfig {
        height: 48,
        width: 48,
        num_sites: 14,
        ..SynthConfig::default()
    }
}

fn graphs(config: &SynthConfig, n: usize) -> Vec<SegmentGraph> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (p, gt) = generate_frame(config, i as u64).unwrap();
            build_graph(&frame_id(i), &p, &gt).unwrap()
        })
        .collect()
}

#[test]
fn dataset_to_graph_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config();
    let manifest = write_dataset(&config, 6, dir.path()).unwrap();
    assert_eq!(DatasetManifest::load(dir.path()).unwrap(), manifest);
    let built = build_dataset_graphs(&manifest, dir.path()).unwrap();
    assert_eq!(built, graphs(&config, 6));
    let path = dir.path().join("graphs.jsonl");
    write_graph_jsonl(&built, &path).unwrap();
    assert_eq!(read_graph_jsonl(&path).unwrap(), built);
    for g in &built {
        g.validate().unwrap();
    }
}

#[test]
fn node_count_matches_predicted_components() {
    let (p, gt) = generate_frame(&SynthConfig::default(), 0).unwrap();
    let g = build_graph("f", &p, &gt).unwrap();
    let comps = connected_components(&argmax_prediction(&p), false);
    assert_eq!(g.num_nodes(), comps.num_segments());
}

#[test]
fn uncorrupted_frames_have_positive_rate_one() {
    let clean = SynthConfig {
        base_error: 0.0,
        neighbor_error_gain: 0.0,
        ..small_config()
    };
    let s = GraphSummary::of(&graphs(&clean, 5));
    assert_eq!(s.positive_rate, 1.0);
    assert_eq!(s.frames, 5);
}

#[test]
fn flip_rate_grows_with_incompatible_neighbors() {
    let config = SynthConfig::default();
    let records: Vec<_> = (0..200u64)
        .into_par_iter()
        .flat_map_iter(|s| generate_frame_detailed(&config, s).unwrap().flips)
        .collect();
    let rate = records.iter().filter(|r| r.flipped).count() as f64 / records.len() as f64;
    assert!(
        (config.base_error..=config.base_error + config.neighbor_error_gain).contains(&rate),
        "flip rate {rate}"
    );
    // Buckets of phi: [0, 0.25), [0.25, 0.5), [0.5, 1].
    let mut buckets = [(0usize, 0usize); 3];
    for r in &records {
        let b = if r.phi < 0.25 {
            0
        } else if r.phi < 0.5 {
            1
        } else {
            2
        };
        buckets[b].0 += usize::from(r.flipped);
        buckets[b].1 += 1;
    }
    let rates: Vec<f64> = buckets.iter().map(|&(f, n)| f as f64 / n as f64).collect();
    assert!(rates[0] < rates[1] && rates[1] < rates[2], "{rates:?}");
}

#[test]
fn training_reports_recompute_and_repeat() {
    let data = graphs(&small_config(), 20);
    let cfg = RunConfig {
        epochs: 30,
        seeds: vec![0, 1],
        ..RunConfig::new(Task::Classification, ArchitectureSpec::parse("L16-S1", 0.01).unwrap())
    };
    let a = train_run(&cfg, &data).unwrap();
    let b = train_run(&cfg, &data).unwrap();
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    assert_eq!(Summary::of(&a.report.seeds), a.report.summary);
    for run in &a.runs {
        assert!(run.log.iter().all(|r| r.train_loss.is_finite()));
        assert_eq!(run.log[run.result.best_epoch - 1].eval_metric, run.result.metrics.auroc);
    }
}

#[test]
fn checkpoint_restores_best_scores() {
    let data = graphs(&small_config(), 12);
    let cfg = RunConfig {
        epochs: 15,
        seeds: vec![3],
        ..RunConfig::new(Task::Regression, ArchitectureSpec::parse("L12-G6-S1", 0.01).unwrap())
    };
    let out = train_run(&cfg, &data).unwrap();
    let ck = &out.runs[0].checkpoint;
    let text = serde_json::to_string(ck).unwrap();
    let (model, store, standardizer) = serde_json::from_str::<segmeta::model::Checkpoint>(&text)
        .unwrap()
        .restore()
        .unwrap();
    let split = segmeta::trainer::prepare_split(&data, Task::Regression, 0.8, 0, false).unwrap();
    assert_eq!(standardizer, split.standardizer);
    let scores = model.predict(&store, &split.eval).unwrap();
    let r2 = segmeta::metrics::r2(&scores, &split.eval_iou).unwrap();
    assert_eq!(Some(r2), out.report.seeds[0].metrics.r2);
}

#[test]
fn edgeless_sage_matches_linear_reduction_through_training() {
    let data = graphs(&small_config(), 4);
    let input = GraphInput::batch(&data, |r| r.to_vec()).without_edges();
    let targets: Vec<f64> = data.iter().flat_map(|g| g.iou_adj.clone()).collect();
    let p = input.features.ncols();
    let ls = ArchitectureSpec::parse("L8-S1", 0.01).unwrap();
    let ll = ArchitectureSpec::parse("L8-L1", 0.01).unwrap();
    let (m_ls, mut s_ls) = Model::init(&ls, p, 5).unwrap();
    let (m_ll, mut s_ll) = Model::init(&ll, p, 5).unwrap();
    // Copy layer 0 and the self half of the SAGE weight.
    for name in ["layer0.weight", "layer0.bias", "layer1.bias"] {
        let v = s_ls.value(s_ls.find(name).unwrap()).clone();
        *s_ll.value_mut(s_ll.find(name).unwrap()) = v;
    }
    let w = s_ls.value(s_ls.find("layer1.weight").unwrap()).slice(ndarray::s![..8, ..]).to_owned();
    *s_ll.value_mut(s_ll.find("layer1.weight").unwrap()) = w;

    let adam = Adam::new(0.01);
    for _ in 0..5 {
        for (m, s) in [(&m_ls, &mut s_ls), (&m_ll, &mut s_ll)] {
            let c = m.forward(s, &input).unwrap();
            let (_, d) = mse_loss(&c.scores, &targets).unwrap();
            m.backward(s, &input, &c, &d);
            adam.step(s);
        }
    }
    let a = m_ls.predict(&s_ls, &input).unwrap();
    let b = m_ll.predict(&s_ll, &input).unwrap();
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-12, "{diff}");
}

#[test]
fn baselines_emit_one_report_each() {
    let data = graphs(&small_config(), 12);
    for task in [Task::Classification, Task::Regression] {
        let mut cfg = BaselineConfig::new(task);
        cfg.run.epochs = 5;
        cfg.run.seeds = vec![0];
        let reports = run_baselines(&cfg, &data).unwrap();
        assert_eq!(reports.len(), 1 + cfg.gnn_specs.len());
        let expected = match task {
            Task::Classification => "logistic regression",
            Task::Regression => "linear regression",
        };
        assert_eq!(reports[0].name, expected);
        assert!(reports[1..].iter().all(|r| r.name.ends_with("(no edges)")));
        assert!(reports.iter().all(|r| r.summary.headline(task).is_some()));
    }
}

#[test]
fn search_ranking_and_csv_row_counts() {
    let data = graphs(&small_config(), 16);
    let mut cfg = SearchConfig::new(Task::Classification, 30);
    cfg.run.epochs = 8;
    cfg.top_k = 12;
    let out = run_search(&cfg, &data).unwrap();
    assert_eq!(out.ranking.len(), 30);
    let mut indices: Vec<usize> = out.ranking.iter().map(|c| c.index).collect();
    indices.sort_unstable();
    assert_eq!(indices, (0..30).collect::<Vec<_>>());
    let metrics: Vec<f64> = out.ranking.iter().filter_map(|c| c.metric).collect();
    assert!(metrics.windows(2).all(|w| w[0] >= w[1]));
    let mut sorted = metrics.clone();
    sorted.sort_by(f64::total_cmp);
    assert!(metrics[0] >= sorted[sorted.len() / 2]);
    for c in &out.ranking {
        let text = format!("{}@lr={}", c.spec, c.spec.learning_rate);
        assert_eq!(text.parse::<ArchitectureSpec>().unwrap(), c.spec);
    }

    let dir = tempfile::tempdir().unwrap();
    write_results_csv(&out, &dir.path().join("results.csv")).unwrap();
    write_histograms_csv(&out, cfg.top_k, &dir.path().join("histograms.csv")).unwrap();
    let rows = |f: &str| csv::Reader::from_path(dir.path().join(f)).unwrap().records().count();
    assert_eq!(rows("results.csv"), 30);
    assert_eq!(rows("histograms.csv"), 12);

    let mut single = SearchConfig::new(Task::Classification, 1);
    single.run.epochs = 3;
    assert_eq!(run_search(&single, &data).unwrap().ranking.len(), 1);
}
