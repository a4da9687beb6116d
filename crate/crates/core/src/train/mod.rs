//! Cyclic-graph training loop, fold evaluation and report statistics.

mod config;
mod fold;
mod report;
mod stats;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::data::{make_loso_splits, ClusterMap, DataError, SampleSet};
use crate::diffcore::{checkpoint, Precision, Real};
use crate::graphs::{GraphError, GraphSet, SensorLayout};
use crate::model::{ModelConfig, ModelError};

pub use config::{TrainConfig, TrainMode};
pub use fold::{
    chunk_batches, evaluate, fold_dims, mean_accuracy, mix_seed, score, train_fold, EpochRecord, FoldReport, GraphEvaluation,
};
pub use report::{
    confusion_grid, confusion_svg, render_text, ConfusionEntry, ExperimentReport, MethodRow, PearsonRow,
    REPORT_SCHEMA,
};
pub use stats::{mean_std, pearson, Evaluation, StatsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("training config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("fold {fold} diverged at epoch {epoch}, batch {batch}: {detail}")]
    Divergence {
        fold: String,
        epoch: usize,
        batch: usize,
        detail: String,
        snapshot: String,
    },
}

/// Everything `run_experiment` needs besides the configs.
#[derive(Clone, Copy, Debug)]
pub struct Experiment<'a> {
    pub dataset: &'a str,
    pub set: &'a SampleSet,
    pub layout: &'a SensorLayout,
    pub clusters: &'a ClusterMap,
}

fn run_job<T: Real>(
    ex: &Experiment<'_>,
    splits: &[crate::data::LosoSplit],
    graphs: &GraphSet,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    fold: usize,
    mode: TrainMode,
) -> Result<(FoldReport, Vec<u8>), TrainError> {
    let cfg = TrainConfig { mode, ..cfg.clone() };
    let (model, report) = train_fold::<T>(ex.set, &splits[fold], fold, graphs, model_cfg, &cfg)?;
    Ok((report, checkpoint::encode(model.params())))
}

/// Aggregate report plus one parameter checkpoint per run, in `report.runs` order.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub checkpoints: Vec<Vec<u8>>,
}

/// Trains every (fold, mode) pair and aggregates the results.
///
/// Jobs run on up to `jobs` threads; each job is seeded from `cfg.seed` and its
/// fold index only, so the report does not depend on `jobs` or scheduling.
/// `progress` is called after each finished job with (done, total).
pub fn run_experiment(
    ex: &Experiment<'_>,
    modes: &[TrainMode],
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    jobs: usize,
    progress: &(dyn Fn(usize, usize, &FoldReport) + Sync),
) -> Result<ExperimentOutput, TrainError> {
    cfg.validate().map_err(TrainError::Config)?;
    if modes.is_empty() {
        return Err(TrainError::Config("no modes requested".into()));
    }
    ex.set.validate()?;
    let splits = make_loso_splits(ex.set, ex.clusters)?;
    let graphs = GraphSet::new(ex.layout, cfg.self_loops)?;
    let grid: Vec<(usize, TrainMode)> = (0..splits.len()).flat_map(|f| modes.iter().map(move |&m| (f, m))).collect();
    let results: Vec<Mutex<Option<Result<(FoldReport, Vec<u8>), TrainError>>>> = grid.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some(&(fold, mode)) = grid.get(i) else { break };
        let r = match cfg.precision {
            Precision::F32 => run_job::<f32>(ex, &splits, &graphs, model_cfg, cfg, fold, mode),
            Precision::F64 => run_job::<f64>(ex, &splits, &graphs, model_cfg, cfg, fold, mode),
        };
        let failed = r.is_err();
        if let Ok((rep, _)) = &r {
            progress(done.fetch_add(1, Ordering::SeqCst) + 1, grid.len(), rep);
        }
        *results[i].lock().unwrap() = Some(r);
        if failed {
            // let the other workers drain without starting new jobs
            next.store(grid.len(), Ordering::SeqCst);
        }
    };
    let threads = jobs.clamp(1, grid.len());
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let mut runs = Vec::with_capacity(grid.len());
    let mut checkpoints = Vec::with_capacity(grid.len());
    for slot in results {
        match slot.into_inner().unwrap() {
            Some(Ok((r, c))) => {
                runs.push(r);
                checkpoints.push(c);
            }
            Some(Err(e)) => return Err(e),
            None => {}
        }
    }
    if runs.len() != grid.len() {
        return Err(TrainError::Config("a job was cancelled".into()));
    }
    let report = ExperimentReport::assemble(
        ex.dataset,
        cfg.clone(),
        model_cfg.clone(),
        ex.set.activity_names.clone(),
        splits.iter().map(|s| s.fold.clone()).collect(),
        modes.to_vec(),
        runs,
    );
    Ok(ExperimentOutput { report, checkpoints })
}
