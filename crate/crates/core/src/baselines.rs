//! Models that ignore neighboring segments: logistic and linear regression on
//! the standardized node features, and graph networks trained on edgeless
//! graphs.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arch::ArchitectureSpec;
use crate::graph::SegmentGraph;
use crate::metrics::MetricError;
use crate::model::sigmoid;
use crate::trainer::{
    evaluate, prepare_split, train_prepared, EvalReport, PreparedSplit, RunConfig, SeedResult, Summary, Task,
    TrainError,
};

pub const LOGISTIC_MAX_EPOCHS: usize = 2000;
pub const LOGISTIC_GRAD_TOL: f64 = 1e-8;
pub const RIDGE: f64 = 1e-8;

/// Default edgeless graph networks per task: the all-linear network and the
/// best SAGE networks, each run without edges.
pub fn default_gnn_baselines(task: Task) -> Vec<ArchitectureSpec> {
    let specs: &[(&str, f64)] = match task {
        Task::Classification => &[("L77-L57-L144-L1", 0.021), ("L242-S1", 0.002), ("L373-S269-S1", 0.009)],
        Task::Regression => &[("L317-L1", 0.001), ("L314-S1", 0.001), ("L142-S137-S1", 0.009)],
    };
    specs
        .iter()
        .map(|&(s, lr)| ArchitectureSpec::parse(s, lr).expect("built-in architecture"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub task: Task,
    /// Template for the graph-network runs and the split; its `arch` and
    /// `drop_edges` are replaced per baseline.
    pub run: RunConfig,
    pub gnn_specs: Vec<ArchitectureSpec>,
}

impl BaselineConfig {
    pub fn new(task: Task) -> Self {
        let specs = default_gnn_baselines(task);
        BaselineConfig {
            task,
            run: RunConfig::new(task, specs[0].clone()),
            gnn_specs: specs,
        }
    }
}

/// Design matrix with a trailing bias column.
fn design(split_features: &ndarray::Array2<f64>) -> DMatrix<f64> {
    let (n, p) = split_features.dim();
    DMatrix::from_fn(n, p + 1, |i, j| if j < p { split_features[[i, j]] } else { 1.0 })
}

pub struct LinearFit {
    pub weights: DVector<f64>,
    pub iterations: usize,
}

/// Logistic regression by gradient descent on the mean cross-entropy with
/// step `1 / L`, `L = λ_max(XᵀX) / (4n)` the gradient's Lipschitz constant.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64]) -> LinearFit {
    let n = x.nrows() as f64;
    let gram = x.transpose() * x;
    let lambda_max = gram.symmetric_eigenvalues().max();
    let step = if lambda_max > 0.0 { 4.0 * n / lambda_max } else { 1.0 };
    let y = DVector::from_column_slice(y);
    let mut w = DVector::zeros(x.ncols());
    let mut iterations = 0;
    while iterations < LOGISTIC_MAX_EPOCHS {
        let residual = (x * &w).map(sigmoid) - &y;
        let grad = x.transpose() * residual / n;
        if grad.norm() < LOGISTIC_GRAD_TOL {
            break;
        }
        w -= grad * step;
        iterations += 1;
    }
    LinearFit { weights: w, iterations }
}

/// Least squares via the ridge-regularized normal equations.
pub fn fit_linear(x: &DMatrix<f64>, y: &[f64]) -> LinearFit {
    let p = x.ncols();
    let gram = x.transpose() * x + DMatrix::identity(p, p) * RIDGE;
    let rhs = x.transpose() * DVector::from_column_slice(y);
    let weights = match gram.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(p)),
    };
    LinearFit { weights, iterations: 1 }
}

fn single_report(name: &str, task: Task, epoch: usize, split: &PreparedSplit, scores: &[f64], run: &RunConfig, start: Instant) -> Result<EvalReport, MetricError> {
    let metrics = evaluate(task, scores, split, run.f1_threshold, run.f1_positive_class)?;
    let seeds = vec![SeedResult {
        seed: 0,
        best_epoch: epoch,
        metrics,
    }];
    Ok(EvalReport {
        name: name.to_string(),
        task,
        config: None,
        summary: Summary::of(&seeds),
        seeds,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// Logistic regression for classification or linear regression for
/// regression, on the standardized features of an already prepared split.
pub fn linear_baseline(task: Task, split: &PreparedSplit, run: &RunConfig) -> Result<EvalReport, TrainError> {
    let start = Instant::now();
    let x_train = design(&split.train.features);
    let x_eval = design(&split.eval.features);
    let targets = split.train_targets(task);
    Ok(match task {
        Task::Classification => {
            let fit = fit_logistic(&x_train, &targets);
            let scores: Vec<f64> = (x_eval * &fit.weights).iter().map(|&z| sigmoid(z)).collect();
            single_report("logistic regression", task, fit.iterations, split, &scores, run, start)?
        }
        Task::Regression => {
            let fit = fit_linear(&x_train, &targets);
            let scores: Vec<f64> = (x_eval * &fit.weights).iter().copied().collect();
            single_report("linear regression", task, fit.iterations, split, &scores, run, start)?
        }
    })
}

/// Every baseline of `config` on one shared split; the linear model first.
pub fn run_baselines(config: &BaselineConfig, graphs: &[SegmentGraph]) -> Result<Vec<EvalReport>, TrainError> {
    let mut run = config.run.clone();
    run.task = config.task;
    run.drop_edges = true;
    run.validate()?;
    let split = prepare_split(graphs, config.task, run.split_ratio, run.split_seed, true)?;
    let mut reports = vec![linear_baseline(config.task, &split, &run)?];
    for spec in &config.gnn_specs {
        let cfg = RunConfig {
            arch: spec.clone(),
            ..run.clone()
        };
        cfg.validate()?;
        reports.push(train_prepared(&cfg, &split, Instant::now())?.report);
    }
    Ok(reports)
}
