//! Random architecture search over depth, layer types, widths and learning
//! rate, plus the ranking and top-k summaries.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{
    ArchitectureSpec, LayerKind, LayerSpec, DEFAULT_GAT_HEADS, MAX_DEPTH, MAX_LR, MAX_WIDTH, MIN_DEPTH, MIN_LR,
    MIN_WIDTH,
};
use crate::dataio::DataError;
use crate::graph::SegmentGraph;
use crate::rng::{below, derive_seed, rng_from_seed, unit_f64};
use crate::trainer::{prepare_split, train_prepared, EvalReport, RunConfig, Task, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub min_depth: usize,
    pub max_depth: usize,
    pub layer_kinds: Vec<LayerKind>,
    pub min_width: usize,
    pub max_width: usize,
    pub min_lr: f64,
    pub max_lr: f64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            min_depth: MIN_DEPTH,
            max_depth: MAX_DEPTH,
            layer_kinds: vec![
                LayerKind::Linear,
                LayerKind::SageMean,
                LayerKind::SageMax,
                LayerKind::Gat { heads: DEFAULT_GAT_HEADS },
            ],
            min_width: MIN_WIDTH,
            max_width: MAX_WIDTH,
            min_lr: MIN_LR,
            max_lr: MAX_LR,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidSpace(m));
        if self.min_depth < 1 || self.min_depth > self.max_depth {
            return bad(format!("depth range {}..={}", self.min_depth, self.max_depth));
        }
        if self.layer_kinds.is_empty() {
            return bad("no layer kinds".into());
        }
        if self.min_width < 1 || self.min_width > self.max_width {
            return bad(format!("width range {}..={}", self.min_width, self.max_width));
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.max_lr && self.max_lr.is_finite()) {
            return bad(format!("learning-rate range [{}, {}]", self.min_lr, self.max_lr));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("search budget must be >= 1")]
    ZeroBudget,
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Uniform depth, uniform layer kind per layer, uniform integer hidden widths
/// and a log-uniform learning rate, in that draw order; the last layer gets
/// width 1.
pub fn sample_architecture(space: &SearchSpace, seed: u64) -> ArchitectureSpec {
    let mut rng = rng_from_seed(seed);
    let span = (space.max_depth - space.min_depth + 1) as u64;
    let depth = space.min_depth + below(&mut rng, span) as usize;
    let mut layers = Vec::with_capacity(depth);
    for i in 0..depth {
        let kind = space.layer_kinds[below(&mut rng, space.layer_kinds.len() as u64) as usize];
        let width = if i + 1 == depth {
            1
        } else {
            let span = (space.max_width - space.min_width + 1) as u64;
            space.min_width + below(&mut rng, span) as usize
        };
        layers.push(LayerSpec { kind, width });
    }
    let (lo, hi) = (space.min_lr.ln(), space.max_lr.ln());
    let u = unit_f64(&mut rng);
    let learning_rate = (lo + u * (hi - lo)).exp().clamp(space.min_lr, space.max_lr);
    ArchitectureSpec { layers, learning_rate }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub space: SearchSpace,
    pub budget: usize,
    pub seed: u64,
    /// Rows of the top-k summary.
    pub top_k: usize,
    /// Template run; its first seed trains every candidate.
    pub run: RunConfig,
    /// The best this many candidates are retrained with all seeds of `run`.
    pub rerun_top: usize,
}

impl SearchConfig {
    pub fn new(task: Task, budget: usize) -> Self {
        let run = RunConfig::new(task, ArchitectureSpec::parse("L10-L1", MIN_LR).expect("valid"));
        SearchConfig {
            space: SearchSpace::default(),
            budget,
            seed: 0,
            top_k: 80,
            run,
            rerun_top: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Sample index; candidate `i` is drawn with `derive_seed(seed, i)`.
    pub index: usize,
    pub rank: usize,
    pub spec: ArchitectureSpec,
    /// Screening metric, `None` when training diverged.
    pub metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub task: Task,
    /// Ordered by rank.
    pub ranking: Vec<Candidate>,
    pub reruns: Vec<EvalReport>,
}

/// Orders by metric, descending; ties and failures fall back to sample index,
/// failures last.
pub fn rank_candidates(mut scored: Vec<(usize, ArchitectureSpec, Option<f64>)>) -> Vec<Candidate> {
    scored.sort_by(|a, b| match (a.2, b.2) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.0.cmp(&b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(&b.0),
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(r, (index, spec, metric))| Candidate {
            index,
            rank: r + 1,
            spec,
            metric,
        })
        .collect()
}

pub fn run_search(config: &SearchConfig, graphs: &[SegmentGraph]) -> Result<SearchOutcome, SearchError> {
    config.space.validate()?;
    if config.budget == 0 {
        return Err(SearchError::ZeroBudget);
    }
    let run = &config.run;
    let split = prepare_split(graphs, run.task, run.split_ratio, run.split_seed, run.drop_edges)?;
    let screening_seed = run.seeds.first().copied().unwrap_or(0);
    let scored = (0..config.budget)
        .into_par_iter()
        .map(|i| {
            let spec = sample_architecture(&config.space, derive_seed(config.seed, i as u64));
            let cfg = RunConfig {
                arch: spec.clone(),
                seeds: vec![screening_seed],
                ..run.clone()
            };
            match train_prepared(&cfg, &split, Instant::now()) {
                Ok(out) => Ok((i, spec, out.report.summary.headline(run.task).map(|m| m.mean))),
                Err(TrainError::NonFinite { .. }) => Ok((i, spec, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let ranking = rank_candidates(scored);
    let reruns = ranking
        .iter()
        .take(config.rerun_top)
        .filter(|c| c.metric.is_some())
        .map(|c| {
            let cfg = RunConfig {
                arch: c.spec.clone(),
                ..run.clone()
            };
            train_prepared(&cfg, &split, Instant::now()).map(|o| o.report)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SearchOutcome {
        task: run.task,
        ranking,
        reruns,
    })
}

fn widths(spec: &ArchitectureSpec) -> Vec<usize> {
    spec.layers[..spec.depth() - 1].iter().map(|l| l.width).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> DataError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(format!("{other:?}")),
        },
    }
}

/// `rank,index,arch,lr,widths,metric`; widths are the hidden widths joined
/// by `-`, the metric is empty for diverged candidates.
pub fn write_results_csv(outcome: &SearchOutcome, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["rank", "index", "arch", "lr", "widths", "metric"])
        .map_err(|e| csv_error(path, e))?;
    for c in &outcome.ranking {
        let ws: Vec<String> = widths(&c.spec).iter().map(usize::to_string).collect();
        w.write_record([
            c.rank.to_string(),
            c.index.to_string(),
            c.spec.layer_string(),
            c.spec.learning_rate.to_string(),
            ws.join("-"),
            c.metric.map_or(String::new(), |m| m.to_string()),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub const HISTOGRAM_HEADER: [&str; 13] = [
    "rank",
    "arch",
    "depth",
    "num_gnn_layers",
    "num_linear",
    "num_sage_mean",
    "num_sage_max",
    "num_gat",
    "lr",
    "width_1",
    "width_2",
    "width_3",
    "total_neurons",
];

/// One row per top-k candidate with the quantities behind depth, layer-type,
/// learning-rate and width histograms. Unused width columns are empty;
/// `total_neurons` sums all layer widths including the output neuron.
pub fn write_histograms_csv(outcome: &SearchOutcome, top_k: usize, path: &Path) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(HISTOGRAM_HEADER).map_err(|e| csv_error(path, e))?;
    for c in outcome.ranking.iter().take(top_k) {
        let count = |f: fn(&LayerKind) -> bool| c.spec.layers.iter().filter(|l| f(&l.kind)).count().to_string();
        let ws = widths(&c.spec);
        let width_col = |i: usize| ws.get(i).map_or(String::new(), usize::to_string);
        let total: usize = c.spec.layers.iter().map(|l| l.width).sum();
        w.write_record([
            c.rank.to_string(),
            c.spec.layer_string(),
            c.spec.depth().to_string(),
            c.spec.num_graph_layers().to_string(),
            count(|k| matches!(k, LayerKind::Linear)),
            count(|k| matches!(k, LayerKind::SageMean)),
            count(|k| matches!(k, LayerKind::SageMax)),
            count(|k| matches!(k, LayerKind::Gat { .. })),
            c.spec.learning_rate.to_string(),
            width_col(0),
            width_col(1),
            width_col(2),
            total.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
