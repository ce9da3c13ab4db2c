//! Command-line front end.
//!
//! Every invocation is first resolved into a [`Invocation`] (all defaults and
//! environment overrides applied), written as JSON next to the outputs, and
//! then executed. `segmeta replay <file>` runs such a file again.
//!
//! Flags can also be set through `SEGMETA_*` environment variables, e.g.
//! `SEGMETA_SEED`, `SEGMETA_WORKERS`, `SEGMETA_OUT_DIR`, `SEGMETA_EPOCHS`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::arch::ArchitectureSpec;
use crate::baselines::{default_gnn_baselines, run_baselines, BaselineConfig};
use crate::dataio::{read_graph_jsonl, write_graph_jsonl, DataError, DatasetManifest};
use crate::graph::{build_dataset_graphs, GraphSummary};
use crate::metrics::PositiveClass;
use crate::search::{run_search, write_histograms_csv, write_results_csv, SearchConfig, SearchSpace};
use crate::synth::{write_dataset, SynthConfig};
use crate::trainer::{train_run, EvalReport, RunConfig, Task};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";
pub const DEFAULT_OUT_DIR: &str = "segmeta-out";

type Error = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Parser)]
#[command(name = "segmeta", version, about = "Meta classification and regression of segments with graph neural networks")]
pub struct Cli {
    /// Base seed: synthetic data seed, first training seed, search seed.
    #[arg(long, global = true, env = "SEGMETA_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SEGMETA_WORKERS", value_parser = clap::value_parser!(u64).range(1..))]
    pub workers: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SEGMETA_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long, env = "SEGMETA_FRAMES", value_parser = clap::value_parser!(u64).range(1..))]
        frames: u64,
        /// Generator settings (JSON); omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory (default: the output directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build one graph per frame of a dataset into a JSONL file.
    #[command(name = "buildgraphs")]
    BuildGraphs {
        #[arg(long)]
        data: PathBuf,
        /// Graph file (default: OUT_DIR/graphs.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one architecture with several seeds.
    Train {
        #[command(flatten)]
        common: CommonRun,
        /// Layer string such as `L242-S1`, optionally with `@lr=RATE`.
        #[arg(long, env = "SEGMETA_ARCH")]
        arch: String,
        #[arg(long, env = "SEGMETA_LR")]
        lr: Option<f64>,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        #[arg(long)]
        drop_edges: bool,
    },
    /// Random architecture search.
    Search {
        #[command(flatten)]
        common: CommonRun,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        budget: u64,
        /// Rows of histograms.csv.
        #[arg(long, default_value_t = 80)]
        top_k: usize,
        /// Retrain the best N candidates with `--seeds` seeds.
        #[arg(long, default_value_t = 0)]
        rerun_top: usize,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Search-space bounds (JSON); omitted fields take their defaults.
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Logistic/linear regression and graph networks without edges.
    Baselines {
        #[command(flatten)]
        common: CommonRun,
        /// Graph network to run without edges, `LAYERS@lr=RATE`; repeatable.
        #[arg(long = "gnn")]
        gnn: Vec<String>,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
    },
    /// Re-execute a resolved configuration file.
    Replay { config: PathBuf },
}

#[derive(Debug, Args)]
pub struct CommonRun {
    #[arg(long, env = "SEGMETA_GRAPHS")]
    pub graphs: PathBuf,
    #[arg(long, env = "SEGMETA_TASK")]
    pub task: Task,
    #[arg(long, default_value_t = 200, env = "SEGMETA_EPOCHS", value_parser = clap::value_parser!(u64).range(1..))]
    pub epochs: u64,
    #[arg(long, default_value_t = 0.8)]
    pub split_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub eval_every: u64,
    #[arg(long, default_value_t = 0.5)]
    pub f1_threshold: f64,
    #[arg(long, value_enum, default_value = "iou0_is_0")]
    pub f1_positive_class: PositiveClass,
    /// Neighbors sampled per node in SAGE layers (default: all).
    #[arg(long)]
    pub sage_sample: Option<usize>,
}

/// A fully resolved command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Resolved {
    Synth {
        frames: usize,
        out: PathBuf,
        config: SynthConfig,
    },
    #[serde(rename = "buildgraphs")]
    BuildGraphs { data: PathBuf, out: PathBuf },
    Train {
        graphs: PathBuf,
        out_dir: PathBuf,
        run: RunConfig,
    },
    Search {
        graphs: PathBuf,
        out_dir: PathBuf,
        search: SearchConfig,
    },
    Baselines {
        graphs: PathBuf,
        out_dir: PathBuf,
        baselines: BaselineConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<u64>,
    #[serde(flatten)]
    pub resolved: Resolved,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn run_config(common: &CommonRun, arch: ArchitectureSpec, seeds: u64, base_seed: u64) -> RunConfig {
    RunConfig {
        task: common.task,
        arch,
        epochs: common.epochs as usize,
        seeds: (base_seed..base_seed + seeds).collect(),
        split_ratio: common.split_ratio,
        split_seed: common.split_seed,
        drop_edges: false,
        eval_every: common.eval_every as usize,
        f1_threshold: common.f1_threshold,
        f1_positive_class: common.f1_positive_class,
        sage_sample_size: common.sage_sample,
    }
}

/// Applies defaults, reads referenced config files and returns the invocation.
pub fn resolve(cli: Cli) -> Result<Invocation, Error> {
    let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let base_seed = cli.seed.unwrap_or(0);
    let resolved = match cli.command {
        Command::Synth { frames, config, out } => {
            let mut config: SynthConfig = match config {
                Some(path) => read_json(&path)?,
                None => SynthConfig::default(),
            };
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            config.validate()?;
            Resolved::Synth {
                frames: frames as usize,
                out: out.unwrap_or(out_dir),
                config,
            }
        }
        Command::BuildGraphs { data, out } => Resolved::BuildGraphs {
            data,
            out: out.unwrap_or_else(|| out_dir.join("graphs.jsonl")),
        },
        Command::Train {
            common,
            arch,
            lr,
            seeds,
            drop_edges,
        } => {
            let mut spec: ArchitectureSpec = arch.parse()?;
            if let Some(lr) = lr {
                if arch.contains("@lr=") && lr != spec.learning_rate {
                    return Err(format!("--lr {lr} conflicts with the rate in --arch {arch:?}").into());
                }
                spec.learning_rate = lr;
            }
            let mut run = run_config(&common, spec, seeds, base_seed);
            run.drop_edges = drop_edges;
            run.validate()?;
            Resolved::Train {
                graphs: common.graphs,
                out_dir,
                run,
            }
        }
        Command::Search {
            common,
            budget,
            top_k,
            rerun_top,
            seeds,
            space,
        } => {
            let space: SearchSpace = match space {
                Some(path) => read_json(&path)?,
                None => SearchSpace::default(),
            };
            space.validate()?;
            let mut search = SearchConfig::new(common.task, budget as usize);
            search.space = space;
            search.seed = base_seed;
            search.top_k = top_k;
            search.rerun_top = rerun_top;
            search.run = run_config(&common, search.run.arch.clone(), seeds, base_seed);
            search.run.validate()?;
            Resolved::Search {
                graphs: common.graphs,
                out_dir,
                search,
            }
        }
        Command::Baselines { common, gnn, seeds } => {
            let specs = if gnn.is_empty() {
                default_gnn_baselines(common.task)
            } else {
                gnn.iter().map(|s| s.parse()).collect::<Result<Vec<ArchitectureSpec>, _>>()?
            };
            let mut baselines = BaselineConfig::new(common.task);
            baselines.run = run_config(&common, specs.first().cloned().unwrap_or(baselines.run.arch), seeds, base_seed);
            baselines.run.drop_edges = true;
            baselines.gnn_specs = specs;
            Resolved::Baselines {
                graphs: common.graphs,
                out_dir,
                baselines,
            }
        }
        Command::Replay { config } => {
            let mut inv: Invocation = read_json(&config)?;
            if cli.workers.is_some() {
                inv.workers = cli.workers;
            }
            return Ok(inv);
        }
    };
    Ok(Invocation {
        workers: cli.workers,
        resolved,
    })
}

fn load_graphs(path: &Path) -> Result<Vec<crate::graph::SegmentGraph>, DataError> {
    read_graph_jsonl(path)
}

fn report_file_name(report: &EvalReport) -> String {
    let slug: String = report
        .name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    format!("{}.json", slug.trim_matches('_').replace("__", "_"))
}

fn write_epoch_log(path: &Path, runs: &[crate::trainer::SeedRun]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["seed", "epoch", "train_loss", "eval_metric"])?;
    for run in runs {
        for rec in &run.log {
            w.write_record([
                rec.seed.to_string(),
                rec.epoch.to_string(),
                rec.train_loss.to_string(),
                rec.eval_metric.map_or(String::new(), |m| m.to_string()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn print_report(out: &mut impl std::io::Write, report: &EvalReport) -> std::io::Result<()> {
    let fmt = |m: Option<crate::metrics::MeanStd>| {
        m.map_or("-".to_string(), |m| format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.std))
    };
    match report.task {
        Task::Classification => writeln!(
            out,
            "{:<32} AUROC {:>16}  F1 {:>16}",
            report.name,
            fmt(report.summary.auroc),
            fmt(report.summary.f1)
        ),
        Task::Regression => writeln!(out, "{:<32} R2 {:>16}", report.name, fmt(report.summary.r2)),
    }
}

/// Runs a resolved invocation; the resolved JSON is written before any other
/// output.
pub fn execute(inv: &Invocation) -> Result<(), Error> {
    let mut stdout = std::io::stdout().lock();
    match &inv.resolved {
        Resolved::Synth { frames, out, config } => {
            fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
            write_json(inv, &out.join(RESOLVED_CONFIG))?;
            let manifest = write_dataset(config, *frames, out)?;
            writeln!(stdout, "wrote {} frames to {}", manifest.frames.len(), out.display())?;
        }
        Resolved::BuildGraphs { data, out } => {
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
            }
            write_json(inv, &out.with_extension("config.json"))?;
            let manifest = DatasetManifest::load(data)?;
            let graphs = build_dataset_graphs(&manifest, data)?;
            write_graph_jsonl(&graphs, out)?;
            let s = GraphSummary::of(&graphs);
            writeln!(
                stdout,
                "frames {}  segments {}  edges {}  positive rate {:.4}",
                s.frames, s.segments, s.edges, s.positive_rate
            )?;
        }
        Resolved::Train { graphs, out_dir, run } => {
            fs::create_dir_all(out_dir.join("checkpoints")).map_err(|e| format!("{}: {e}", out_dir.display()))?;
            write_json(inv, &out_dir.join(RESOLVED_CONFIG))?;
            let graphs = load_graphs(graphs)?;
            let start = Instant::now();
            let outcome = train_run(run, &graphs)?;
            write_json(&outcome.report, &out_dir.join("report.json"))?;
            write_epoch_log(&out_dir.join("epochs.csv"), &outcome.runs)?;
            for r in &outcome.runs {
                write_json(
                    &r.checkpoint,
                    &out_dir.join("checkpoints").join(format!("seed_{}.json", r.result.seed)),
                )?;
            }
            print_report(&mut stdout, &outcome.report)?;
            writeln!(stdout, "{:.1}s", start.elapsed().as_secs_f64())?;
        }
        Resolved::Search { graphs, out_dir, search } => {
            fs::create_dir_all(out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
            write_json(inv, &out_dir.join(RESOLVED_CONFIG))?;
            let graphs = load_graphs(graphs)?;
            let outcome = run_search(search, &graphs)?;
            write_results_csv(&outcome, &out_dir.join("results.csv"))?;
            write_histograms_csv(&outcome, search.top_k, &out_dir.join("histograms.csv"))?;
            if !outcome.reruns.is_empty() {
                write_json(&outcome.reruns, &out_dir.join("reruns.json"))?;
            }
            for c in outcome.ranking.iter().take(5) {
                writeln!(
                    stdout,
                    "{:>4}  {:<28} lr {:<10.6} {}",
                    c.rank,
                    c.spec.layer_string(),
                    c.spec.learning_rate,
                    c.metric.map_or("diverged".to_string(), |m| format!("{m:.4}"))
                )?;
            }
            for r in &outcome.reruns {
                print_report(&mut stdout, r)?;
            }
        }
        Resolved::Baselines {
            graphs,
            out_dir,
            baselines,
        } => {
            let dir = out_dir.join("baselines");
            fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            write_json(inv, &out_dir.join(RESOLVED_CONFIG))?;
            let graphs = load_graphs(graphs)?;
            let reports = run_baselines(baselines, &graphs)?;
            for r in &reports {
                write_json(r, &dir.join(report_file_name(r)))?;
                print_report(&mut stdout, r)?;
            }
        }
    }
    Ok(())
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    let inv = match resolve(cli) {
        Ok(inv) => inv,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(n) = inv.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return 1;
        }
    }
    match execute(&inv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
