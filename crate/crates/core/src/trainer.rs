//! Training and evaluation protocol.
//!
//! Frames are split once into training and evaluation sets. Every seed then
//! trains a fresh model full-batch (one Adam step per epoch over all training
//! nodes, MSE between the sigmoid output and the task target), evaluates after
//! each epoch and keeps the epoch with the best evaluation metric.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchError, ArchitectureSpec};
use crate::features::{FeatureError, Standardizer};
use crate::graph::SegmentGraph;
use crate::metrics::{auroc, f1, r2, MeanStd, MetricError, PositiveClass};
use crate::model::{Checkpoint, GraphInput, Model};
use crate::nn::{mse_loss, Adam, NnError, ParamStore};
use crate::rng::{derive_seed, rng_from_seed, shuffle};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("need at least 2 frames to split, got {0}")]
    TooFewFrames(usize),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("non-finite training loss {loss} at seed {seed}, epoch {epoch}")]
    NonFinite { seed: u64, epoch: usize, loss: f64 },
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Predict `IoU_0`; headline metric AUROC.
    #[value(name = "cls", alias = "classification")]
    Classification,
    /// Predict `IoU_adj`; headline metric R².
    #[value(name = "reg", alias = "regression")]
    Regression,
}

impl Task {
    pub fn metric_name(&self) -> &'static str {
        match self {
            Task::Classification => "auroc",
            Task::Regression => "r2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub arch: ArchitectureSpec,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub split_ratio: f64,
    pub split_seed: u64,
    pub drop_edges: bool,
    pub eval_every: usize,
    pub f1_threshold: f64,
    pub f1_positive_class: PositiveClass,
    /// Neighbors kept per node in SAGE layers; `None` uses all of them.
    pub sage_sample_size: Option<usize>,
}

impl RunConfig {
    pub fn new(task: Task, arch: ArchitectureSpec) -> Self {
        RunConfig {
            task,
            arch,
            epochs: 200,
            seeds: (0..5).collect(),
            split_ratio: 0.8,
            split_seed: 0,
            drop_edges: false,
            eval_every: 1,
            f1_threshold: 0.5,
            f1_positive_class: PositiveClass::default(),
            sage_sample_size: None,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split ratio must be in (0, 1)");
        }
        if self.seeds.is_empty() {
            return bad("need at least one seed");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1");
        }
        if self.sage_sample_size == Some(0) {
            return bad("sage sample size must be >= 1");
        }
        self.arch.check_buildable()?;
        Ok(())
    }
}

/// Image-level split: shuffles the sorted ids and gives the first
/// `ceil(ratio * n)` (at most `n - 1`) to training.
pub fn split_frames(ids: &[String], ratio: f64, split_seed: u64) -> Result<(Vec<String>, Vec<String>), TrainError> {
    if ids.len() < 2 {
        return Err(TrainError::TooFewFrames(ids.len()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(TrainError::InvalidConfig(format!("split ratio {ratio} not in (0, 1)")));
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    let mut rng = rng_from_seed(split_seed);
    shuffle(&mut rng, &mut sorted);
    let n_train = ((ratio * ids.len() as f64).ceil() as usize).clamp(1, ids.len() - 1);
    let eval = sorted.split_off(n_train);
    Ok((sorted, eval))
}

/// Standardized training and evaluation batches of one split.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub train: GraphInput,
    pub eval: GraphInput,
    pub train_iou: Vec<f64>,
    pub eval_iou: Vec<f64>,
    pub train_labels: Vec<u8>,
    pub eval_labels: Vec<u8>,
    pub standardizer: Standardizer,
    pub train_ids: Vec<String>,
    pub eval_ids: Vec<String>,
}

impl PreparedSplit {
    pub fn train_targets(&self, task: Task) -> Vec<f64> {
        match task {
            Task::Classification => self.train_labels.iter().map(|&l| f64::from(l)).collect(),
            Task::Regression => self.train_iou.clone(),
        }
    }
}

pub fn prepare_split(
    graphs: &[SegmentGraph],
    task: Task,
    ratio: f64,
    split_seed: u64,
    drop_edges: bool,
) -> Result<PreparedSplit, TrainError> {
    let ids: Vec<String> = graphs.iter().map(|g| g.frame_id.clone()).collect();
    let (train_ids, eval_ids) = split_frames(&ids, ratio, split_seed)?;
    let pick = |wanted: &[String]| -> Vec<SegmentGraph> {
        let set: std::collections::HashSet<&str> = wanted.iter().map(String::as_str).collect();
        graphs
            .iter()
            .filter(|g| set.contains(g.frame_id.as_str()))
            .cloned()
            .collect()
    };
    let train_graphs = pick(&train_ids);
    let eval_graphs = pick(&eval_ids);
    let standardizer =
        Standardizer::fit(train_graphs.iter().flat_map(|g| g.features.iter().map(Vec::as_slice)))?;
    let mut train = GraphInput::batch(&train_graphs, |r| standardizer.apply(r));
    let mut eval = GraphInput::batch(&eval_graphs, |r| standardizer.apply(r));
    if drop_edges {
        train = train.without_edges();
        eval = eval.without_edges();
    }
    let collect = |gs: &[SegmentGraph]| -> (Vec<f64>, Vec<u8>) {
        (
            gs.iter().flat_map(|g| g.iou_adj.iter().copied()).collect(),
            gs.iter().flat_map(|g| g.iou0.iter().copied()).collect(),
        )
    };
    let (train_iou, train_labels) = collect(&train_graphs);
    let (eval_iou, eval_labels) = collect(&eval_graphs);

    match task {
        Task::Classification => {
            let pos = eval_labels.iter().filter(|&&l| l == 1).count();
            if pos == 0 || pos == eval_labels.len() {
                return Err(TrainError::DegenerateSplit(format!(
                    "evaluation set has {pos} of {} segments with IoU_0 = 1; need both classes",
                    eval_labels.len()
                )));
            }
        }
        Task::Regression => {
            if r2(&eval_iou, &eval_iou).is_err() {
                return Err(TrainError::DegenerateSplit(
                    "evaluation IoU_adj has zero variance".into(),
                ));
            }
        }
    }
    Ok(PreparedSplit {
        train,
        eval,
        train_iou,
        eval_iou,
        train_labels,
        eval_labels,
        standardizer,
        train_ids,
        eval_ids,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

impl Metrics {
    pub fn headline(&self, task: Task) -> f64 {
        match task {
            Task::Classification => self.auroc.unwrap_or(f64::NAN),
            Task::Regression => self.r2.unwrap_or(f64::NAN),
        }
    }
}

pub fn evaluate(
    task: Task,
    scores: &[f64],
    split: &PreparedSplit,
    threshold: f64,
    positive: PositiveClass,
) -> Result<Metrics, MetricError> {
    Ok(match task {
        Task::Classification => Metrics {
            auroc: Some(auroc(scores, &split.eval_labels)?),
            f1: Some(f1(scores, &split.eval_labels, threshold, positive)?),
            r2: None,
        },
        Task::Regression => Metrics {
            r2: Some(r2(scores, &split.eval_iou)?),
            ..Metrics::default()
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auroc: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f1: Option<MeanStd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<MeanStd>,
}

impl Summary {
    pub fn of(seeds: &[SeedResult]) -> Summary {
        let gather = |f: fn(&Metrics) -> Option<f64>| -> Option<MeanStd> {
            let values: Option<Vec<f64>> = seeds.iter().map(|s| f(&s.metrics)).collect();
            values.and_then(|v| MeanStd::of(&v))
        };
        Summary {
            auroc: gather(|m| m.auroc),
            f1: gather(|m| m.f1),
            r2: gather(|m| m.r2),
        }
    }

    pub fn headline(&self, task: Task) -> Option<MeanStd> {
        match task {
            Task::Classification => self.auroc,
            Task::Regression => self.r2,
        }
    }
}

/// Per-seed best metrics aggregated over seeds. Serializes deterministically;
/// wall time is kept out of the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    pub seeds: Vec<SeedResult>,
    pub summary: Summary,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub result: SeedResult,
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: EvalReport,
    pub runs: Vec<SeedRun>,
}

/// Trains one seed on an already prepared split.
pub fn train_seed(config: &RunConfig, split: &PreparedSplit, seed: u64) -> Result<SeedRun, TrainError> {
    let (model, mut store) = Model::init(&config.arch, split.train.features.ncols(), seed)?;
    let adam = Adam::new(config.arch.learning_rate);
    let targets = split.train_targets(config.task);
    let mut train_input = split.train.clone();

    let mut best: Option<(f64, usize, Metrics, ParamStore)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        if let Some(k) = config.sage_sample_size {
            let epoch_seed = derive_seed(seed, epoch as u64);
            train_input.sage_adjacency = Some(train_input.adjacency.sampled(k, epoch_seed));
        }
        let cache = model.forward(&store, &train_input)?;
        let (loss, d_scores) = mse_loss(&cache.scores, &targets)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { seed, epoch, loss });
        }
        model.backward(&mut store, &train_input, &cache, &d_scores);
        adam.step(&mut store);

        let mut eval_metric = None;
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let scores = model.predict(&store, &split.eval)?;
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(TrainError::NonFinite { seed, epoch, loss: f64::NAN });
            }
            let metrics = evaluate(config.task, &scores, split, config.f1_threshold, config.f1_positive_class)?;
            let headline = metrics.headline(config.task);
            eval_metric = Some(headline);
            if best.as_ref().is_none_or(|(b, ..)| headline > *b) {
                best = Some((headline, epoch, metrics, store.clone()));
            }
        }
        log.push(EpochRecord {
            seed,
            epoch,
            train_loss: loss,
            eval_metric,
        });
    }
    let (_, best_epoch, metrics, best_store) = best.expect("the final epoch is always evaluated");
    Ok(SeedRun {
        result: SeedResult {
            seed,
            best_epoch,
            metrics,
        },
        checkpoint: Checkpoint::capture(&model, &best_store, &split.standardizer),
        log,
    })
}

/// Runs every seed of `config` (in parallel) and aggregates the best epochs.
pub fn train_run(config: &RunConfig, graphs: &[SegmentGraph]) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let start = Instant::now();
    let split = prepare_split(graphs, config.task, config.split_ratio, config.split_seed, config.drop_edges)?;
    train_prepared(config, &split, start)
}

pub fn train_prepared(config: &RunConfig, split: &PreparedSplit, start: Instant) -> Result<TrainOutcome, TrainError> {
    let runs: Vec<SeedRun> = config
        .seeds
        .par_iter()
        .map(|&seed| train_seed(config, split, seed))
        .collect::<Result<_, _>>()?;
    let seeds: Vec<SeedResult> = runs.iter().map(|r| r.result.clone()).collect();
    let mut name = config.arch.layer_string();
    if config.drop_edges {
        name.push_str(" (no edges)");
    }
    let report = EvalReport {
        name,
        task: config.task,
        config: Some(config.clone()),
        summary: Summary::of(&seeds),
        seeds,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { report, runs })
}
