//! Flat `key = value` experiment files.
//!
//! ```text
//! # comment
//! target_name = toy
//! target_manifest = target.pool.jsonl
//! target_vectors = target.vec
//! source_manifest = source.pool.jsonl
//! source_vectors = source.vec
//! train_sizes = 10, 20
//! retrieval_counts = 0, 200
//! results = results.csv
//! ```
//!
//! Relative paths resolve against the file's directory. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use super::experiment::ExperimentConfig;
use crate::ann::HnswParams;
use crate::classifier::TrainConfig;
use crate::error::{Error, Result};
use crate::pool::{load_pool, Exclusions};
use crate::retriever::MmrConfig;

pub const DEFAULT_TRAIN_SIZES: [usize; 12] = [10, 20, 30, 40, 50, 100, 200, 300, 400, 500, 1000, 2000];
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const DEFAULT_SPLIT_SEED: u64 = 17;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentFile {
    pub target_name: String,
    pub target_manifest: PathBuf,
    pub target_vectors: PathBuf,
    pub source_manifest: PathBuf,
    pub source_vectors: PathBuf,
    pub train_sizes: Vec<usize>,
    pub retrieval_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub split_seed: u64,
    pub val_size: usize,
    pub test_size: usize,
    pub exclude_languages: Vec<String>,
    pub exclude_tasks: Vec<String>,
    pub exclude_target_language: bool,
    pub k_init: Option<usize>,
    pub mmr_lambda: Option<f64>,
    pub mmr_candidate_multiplier: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: Option<usize>,
    pub l2: f64,
    pub select_best_on_validation: bool,
    pub hnsw: HnswParams,
    pub record_wall_time: bool,
    pub results: PathBuf,
    pub runs: Option<PathBuf>,
    pub provenance: Option<PathBuf>,
    pub provenance_top_n: Option<usize>,
    pub workers: usize,
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_one(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl ExperimentFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let defaults = TrainConfig::default();
        let mut f = ExperimentFile {
            target_name: "target".into(),
            target_manifest: PathBuf::new(),
            target_vectors: PathBuf::new(),
            source_manifest: PathBuf::new(),
            source_vectors: PathBuf::new(),
            train_sizes: DEFAULT_TRAIN_SIZES.to_vec(),
            retrieval_counts: vec![0, 20, 200, 2000],
            seeds: DEFAULT_SEEDS.to_vec(),
            split_seed: DEFAULT_SPLIT_SEED,
            val_size: 500,
            test_size: 2000,
            exclude_languages: Vec::new(),
            exclude_tasks: Vec::new(),
            exclude_target_language: true,
            k_init: None,
            mmr_lambda: None,
            mmr_candidate_multiplier: MmrConfig::default().candidate_multiplier,
            learning_rate: defaults.learning_rate,
            batch_size: defaults.batch_size,
            epochs: None,
            l2: defaults.l2,
            select_best_on_validation: defaults.select_best_on_validation,
            hnsw: HnswParams::default(),
            record_wall_time: false,
            results: base_dir.join("results.csv"),
            runs: None,
            provenance: None,
            provenance_top_n: None,
            workers: 1,
        };
        let mut seen = std::collections::BTreeSet::new();
        let resolve = |v: &str| base_dir.join(v);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", n + 1)));
            }
            match key {
                "target_name" => f.target_name = value.to_string(),
                "target_manifest" => f.target_manifest = resolve(value),
                "target_vectors" => f.target_vectors = resolve(value),
                "source_manifest" => f.source_manifest = resolve(value),
                "source_vectors" => f.source_vectors = resolve(value),
                "train_sizes" => f.train_sizes = parse_list(key, value)?,
                "retrieval_counts" => f.retrieval_counts = parse_list(key, value)?,
                "seeds" => f.seeds = parse_list(key, value)?,
                "split_seed" => f.split_seed = parse_one(key, value)?,
                "val_size" => f.val_size = parse_one(key, value)?,
                "test_size" => f.test_size = parse_one(key, value)?,
                "exclude_languages" => f.exclude_languages = parse_list(key, value)?,
                "exclude_tasks" => f.exclude_tasks = parse_list(key, value)?,
                "exclude_target_language" => f.exclude_target_language = parse_bool(key, value)?,
                "k_init" => f.k_init = Some(parse_one(key, value)?),
                "mmr_lambda" => f.mmr_lambda = Some(parse_one(key, value)?),
                "mmr_candidate_multiplier" => f.mmr_candidate_multiplier = parse_one(key, value)?,
                "learning_rate" => f.learning_rate = parse_one(key, value)?,
                "batch_size" => f.batch_size = parse_one(key, value)?,
                "epochs" => f.epochs = Some(parse_one(key, value)?),
                "l2" => f.l2 = parse_one(key, value)?,
                "select_best_on_validation" => f.select_best_on_validation = parse_bool(key, value)?,
                "hnsw_m" => f.hnsw.max_neighbors = parse_one(key, value)?,
                "hnsw_ef_construction" => f.hnsw.ef_construction = parse_one(key, value)?,
                "hnsw_ef_search" => f.hnsw.ef_search = parse_one(key, value)?,
                "hnsw_seed" => f.hnsw.rng_seed = parse_one(key, value)?,
                "hnsw_exact_threshold" => f.hnsw.exact_threshold = parse_one(key, value)?,
                "record_wall_time" => f.record_wall_time = parse_bool(key, value)?,
                "results" => f.results = resolve(value),
                "runs" => f.runs = Some(resolve(value)),
                "provenance" => f.provenance = Some(resolve(value)),
                "provenance_top_n" => f.provenance_top_n = Some(parse_one(key, value)?),
                "workers" => f.workers = parse_one(key, value)?,
                _ => return Err(Error::Config(format!("line {}: unknown key {key}", n + 1))),
            }
        }
        for (key, p) in [
            ("target_manifest", &f.target_manifest),
            ("target_vectors", &f.target_vectors),
            ("source_manifest", &f.source_manifest),
            ("source_vectors", &f.source_vectors),
        ] {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("missing required key {key}")));
            }
        }
        Ok(f)
    }

    /// Fails on the first input file that does not exist.
    pub fn check_inputs(&self) -> Result<()> {
        for p in [
            &self.target_manifest,
            &self.target_vectors,
            &self.source_manifest,
            &self.source_vectors,
        ] {
            if !p.is_file() {
                return Err(Error::io(
                    p.clone(),
                    std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
                ));
            }
        }
        Ok(())
    }

    /// Loads both pools and assembles a validated [`ExperimentConfig`].
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        self.check_inputs()?;
        let target = Arc::new(load_pool(&self.target_manifest, &self.target_vectors)?);
        let source = Arc::new(load_pool(&self.source_manifest, &self.source_vectors)?);
        let mut cfg = ExperimentConfig::new(self.target_name.clone(), target, source);
        cfg.exclusions = Exclusions::new(self.exclude_languages.iter().cloned(), self.exclude_tasks.iter().cloned());
        cfg.exclude_target_languages = self.exclude_target_language;
        cfg.train_sizes = self.train_sizes.clone();
        cfg.retrieval_counts = self.retrieval_counts.clone();
        cfg.seeds = self.seeds.clone();
        cfg.split_seed = self.split_seed;
        cfg.val_size = self.val_size;
        cfg.test_size = self.test_size;
        cfg.retrieval.k_init = self.k_init;
        cfg.retrieval.mmr = self.mmr_lambda.map(|lambda| MmrConfig {
            lambda,
            candidate_multiplier: self.mmr_candidate_multiplier,
        });
        cfg.train.learning_rate = self.learning_rate;
        cfg.train.batch_size = self.batch_size;
        cfg.train.epochs = self.epochs;
        cfg.train.l2 = self.l2;
        cfg.train.select_best_on_validation = self.select_best_on_validation;
        cfg.hnsw = self.hnsw;
        cfg.record_wall_time = self.record_wall_time;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "target_manifest = t.jsonl\ntarget_vectors = t.vec\nsource_manifest = s.jsonl\nsource_vectors = s.vec\n";

    #[test]
    fn defaults_and_paths() {
        let f = ExperimentFile::parse(MIN, Path::new("/d")).unwrap();
        assert_eq!(f.train_sizes, DEFAULT_TRAIN_SIZES);
        assert_eq!(f.seeds.len(), 5);
        assert_eq!(f.val_size, 500);
        assert_eq!(f.test_size, 2000);
        assert_eq!(f.target_manifest, Path::new("/d/t.jsonl"));
        assert_eq!(f.results, Path::new("/d/results.csv"));
        assert_eq!(f.hnsw, HnswParams::default());
    }

    #[test]
    fn parses_values_and_comments() {
        let text = format!(
            "{MIN}# c\ntrain_sizes = 10, 20 # inline\nretrieval_counts = 0,200\nseeds = 7\nmmr_lambda = 0.25\nexclude_languages = en, de\nexclude_target_language = false\nhnsw_m = 16\n"
        );
        let f = ExperimentFile::parse(&text, Path::new(".")).unwrap();
        assert_eq!(f.train_sizes, vec![10, 20]);
        assert_eq!(f.retrieval_counts, vec![0, 200]);
        assert_eq!(f.seeds, vec![7]);
        assert_eq!(f.mmr_lambda, Some(0.25));
        assert_eq!(f.exclude_languages, vec!["en", "de"]);
        assert!(!f.exclude_target_language);
        assert_eq!(f.hnsw.max_neighbors, 16);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["bogus = 1\n", "seeds = x\n", "no equals\n", "seeds = 1\nseeds = 2\n", "record_wall_time = maybe\n"] {
            let text = format!("{MIN}{bad}");
            assert!(matches!(ExperimentFile::parse(&text, Path::new(".")), Err(Error::Config(_))), "{bad}");
        }
        assert!(matches!(ExperimentFile::parse("seeds = 1\n", Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_is_reported() {
        let f = ExperimentFile::parse(MIN, Path::new("/nonexistent-dir")).unwrap();
        assert!(matches!(f.check_inputs(), Err(Error::Io { .. })));
    }
}
