use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use super::{split_target, subsample, TargetSplit};
use crate::ann::{AnnIndex, HnswParams};
use crate::classifier::{evaluate_f1, train, Example, TrainConfig};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::pool::{filter_pool, Exclusions, Pool};
use crate::retriever::{retrieve, RetrievalConfig};

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Label for reports, e.g. the target task name.
    pub target_name: String,
    pub target_pool: Arc<Pool>,
    pub source_pool: Arc<Pool>,
    /// Explicit exclusions on the source pool.
    pub exclusions: Exclusions,
    /// Also exclude every language present in the target pool.
    pub exclude_target_languages: bool,
    pub train_sizes: Vec<usize>,
    /// 0 is the Mono arm.
    pub retrieval_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub split_seed: u64,
    pub val_size: usize,
    pub test_size: usize,
    /// Template; `total_r` and `exclusions` are set per run.
    pub retrieval: RetrievalConfig,
    /// Template; `rng_seed` is set to the run seed.
    pub train: TrainConfig,
    pub hnsw: HnswParams,
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn new(target_name: impl Into<String>, target_pool: Arc<Pool>, source_pool: Arc<Pool>) -> Self {
        Self {
            target_name: target_name.into(),
            target_pool,
            source_pool,
            exclusions: Exclusions::default(),
            exclude_target_languages: true,
            train_sizes: super::DEFAULT_TRAIN_SIZES.to_vec(),
            retrieval_counts: vec![0, 20, 200, 2000],
            seeds: super::DEFAULT_SEEDS.to_vec(),
            split_seed: super::DEFAULT_SPLIT_SEED,
            val_size: 500,
            test_size: 2000,
            retrieval: RetrievalConfig::new(1),
            train: TrainConfig::default(),
            hnsw: HnswParams::default(),
            record_wall_time: false,
        }
    }

    /// Explicit exclusions plus, if enabled, the target's own languages.
    pub fn effective_exclusions(&self) -> Exclusions {
        let mut ex = self.exclusions.clone();
        if self.exclude_target_languages {
            ex.languages.extend(self.target_pool.languages());
        }
        ex
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.train_sizes.is_empty() || self.train_sizes.contains(&0) {
            return cfg("train_sizes must be a non-empty list of positive sizes".into());
        }
        if self.retrieval_counts.is_empty() {
            return cfg("retrieval_counts must not be empty".into());
        }
        if self.seeds.is_empty() {
            return cfg("seeds must not be empty".into());
        }
        let max_train = *self.train_sizes.iter().max().unwrap();
        let needed = self.val_size + self.test_size + max_train;
        if needed > self.target_pool.len() {
            return Err(Error::InsufficientData {
                needed,
                available: self.target_pool.len(),
            });
        }
        if self.test_size == 0 {
            return cfg("test_size must be positive".into());
        }
        if self.target_pool.dim() != self.source_pool.dim() {
            return Err(Error::DimMismatch {
                expected: self.target_pool.dim(),
                got: self.source_pool.dim(),
            });
        }
        self.train.validate()?;
        self.hnsw.validate()?;
        if let Some(m) = &self.retrieval.mmr {
            m.validate()?;
        }
        Ok(())
    }

    /// All `(train_size, retrieval_count, seed)` cells in canonical order.
    pub fn cells(&self) -> Vec<Cell> {
        let sizes: BTreeSet<usize> = self.train_sizes.iter().copied().collect();
        let counts: BTreeSet<usize> = self.retrieval_counts.iter().copied().collect();
        let mut seeds = self.seeds.clone();
        seeds.dedup();
        let mut out = Vec::new();
        for &train_size in &sizes {
            for &retrieval_count in &counts {
                for &seed in &seeds {
                    out.push(Cell {
                        train_size,
                        retrieval_count,
                        seed,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub train_size: usize,
    pub retrieval_count: usize,
    pub seed: u64,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "train_size={},retrieval_count={},seed={}", self.train_size, self.retrieval_count, self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub train_size: usize,
    pub retrieval_count: usize,
    pub seed: u64,
    pub f1_macro: f64,
    pub wall_time_ms: Option<u64>,
    /// Retrieved instances per source task.
    pub retrieved_provenance: BTreeMap<String, usize>,
    /// Size of the combined training set.
    pub train_count: usize,
    /// The target subsample carried a single label.
    pub single_label: bool,
}

impl ResultRow {
    pub fn cell(&self) -> Cell {
        Cell {
            train_size: self.train_size,
            retrieval_count: self.retrieval_count,
            seed: self.seed,
        }
    }
}

/// A prepared experiment: fixed split and, when any arm retrieves, an index
/// over the filtered source pool.
pub struct Experiment {
    config: ExperimentConfig,
    split: TargetSplit,
    exclusions: Exclusions,
    index: Option<AnnIndex>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let split = split_target(
            config.target_pool.len(),
            config.val_size,
            config.test_size,
            config.split_seed,
        )?;
        let exclusions = config.effective_exclusions();
        let index = if config.retrieval_counts.iter().any(|&r| r > 0) {
            let view = filter_pool(&config.source_pool, &exclusions.languages, &exclusions.tasks);
            Some(AnnIndex::build(view, config.hnsw)?)
        } else {
            None
        };
        Ok(Self {
            config,
            split,
            exclusions,
            index,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn split(&self) -> &TargetSplit {
        &self.split
    }

    pub fn exclusions(&self) -> &Exclusions {
        &self.exclusions
    }

    fn examples<'a>(pool: &'a Pool, rows: &[usize]) -> Vec<Example<'a>> {
        rows.iter()
            .map(|&r| Example::new(pool.vector(r), pool.instance(r).label))
            .collect()
    }

    /// Target rows used for training (and as retrieval queries) in a cell.
    pub fn training_rows(&self, train_size: usize, seed: u64) -> Result<Vec<usize>> {
        subsample(&self.split.reservoir, train_size, seed)
    }

    pub fn run_condition(&self, train_size: usize, retrieval_count: usize, seed: u64) -> Result<ResultRow> {
        self.run_condition_with(train_size, retrieval_count, seed, Parallelism::Sequential)
    }

    fn run_condition_with(
        &self,
        train_size: usize,
        retrieval_count: usize,
        seed: u64,
        par: Parallelism,
    ) -> Result<ResultRow> {
        let start = Instant::now();
        let target = &self.config.target_pool;
        let source = &self.config.source_pool;
        let rows = self.training_rows(train_size, seed)?;
        let mut train_set = Self::examples(target, &rows);
        let single_label = train_set.iter().all(|e| e.label == train_set[0].label);

        let mut provenance = BTreeMap::new();
        if retrieval_count > 0 {
            let index = self.index.as_ref().expect("index is built when any arm retrieves");
            let queries: Vec<Vec<f32>> = rows.iter().map(|&r| target.vector(r).to_vec()).collect();
            let mut rc = self.config.retrieval.clone();
            rc.total_r = retrieval_count;
            rc.exclusions = self.exclusions.clone();
            rc.parallelism = par;
            let set = retrieve(index, source, &queries, &rc)?;
            provenance = set.task_counts();
            train_set.extend(set.items.iter().map(|it| Example::new(source.vector(it.row), it.instance.label)));
        }

        let val = Self::examples(target, &self.split.val);
        let test = Self::examples(target, &self.split.test);
        let tc = TrainConfig {
            rng_seed: seed,
            ..self.config.train
        };
        let (model, _) = train(&train_set, &val, &tc)?;
        let f1 = evaluate_f1(&model, &test)?;
        Ok(ResultRow {
            train_size,
            retrieval_count,
            seed,
            f1_macro: f1,
            wall_time_ms: self
                .config
                .record_wall_time
                .then(|| start.elapsed().as_millis() as u64),
            retrieved_provenance: provenance,
            train_count: train_set.len(),
            single_label,
        })
    }

    /// Runs every cell. Rows come back in canonical `(size, count, seed)`
    /// order whatever the worker count. On failure the rows that precede
    /// the first failing cell are returned with it.
    pub fn sweep(&self, workers: usize) -> std::result::Result<SweepResults, SweepFailure> {
        let cells = self.config.cells();
        let par = if workers > 1 {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        };
        let outcomes = par::with_workers(workers, || {
            par::map_slice(&cells, par, |_, c| {
                self.run_condition_with(c.train_size, c.retrieval_count, c.seed, Parallelism::Sequential)
            })
        });
        let mut rows = Vec::with_capacity(cells.len());
        for (cell, outcome) in cells.into_iter().zip(outcomes) {
            match outcome {
                Ok(r) => rows.push(r),
                Err(error) => {
                    return Err(SweepFailure {
                        completed: rows,
                        failed_cell: cell,
                        error,
                    })
                }
            }
        }
        Ok(SweepResults {
            target_name: self.config.target_name.clone(),
            rows,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResults {
    pub target_name: String,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug)]
pub struct SweepFailure {
    pub completed: Vec<ResultRow>,
    pub failed_cell: Cell,
    pub error: Error,
}

impl fmt::Display for SweepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sweep failed at {}: {}", self.failed_cell, self.error)
    }
}

impl std::error::Error for SweepFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}
