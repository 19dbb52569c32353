//! The low-resource evaluation protocol: a fixed validation/test split of the
//! target data, seeded training subsamples at several sizes, a Mono arm
//! (retrieval count 0) and retrieval-augmented arms, scored by F1-macro.

mod config;
mod experiment;
mod report;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub use config::{ExperimentFile, DEFAULT_SEEDS, DEFAULT_SPLIT_SEED, DEFAULT_TRAIN_SIZES};
pub use experiment::{Cell, Experiment, ExperimentConfig, ResultRow, SweepFailure, SweepResults};
pub use report::{provenance_report, CellSummary, ProvenanceEntry};

/// Mean of the per-class F1 over classes {0, 1}. Any zero denominator makes
/// the affected precision, recall or F1 zero.
pub fn f1_macro(predicted: &[u8], actual: &[u8]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyData);
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let mut total = 0.0;
    for class in [0u8, 1] {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p == class, a == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fneg) as f64);
        total += ratio(2.0 * precision * recall, precision + recall);
    }
    Ok(total / 2.0)
}

/// Row indices of the target pool partitioned into a training reservoir and
/// fixed validation and test sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSplit {
    pub reservoir: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..count`: the first `test_size` rows are the test
/// set, the next `val_size` the validation set, the rest the reservoir.
pub fn split_target(count: usize, val_size: usize, test_size: usize, split_seed: u64) -> Result<TargetSplit> {
    let needed = val_size + test_size;
    if needed > count {
        return Err(Error::InsufficientData {
            needed,
            available: count,
        });
    }
    let mut rows: Vec<usize> = (0..count).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(split_seed));
    let reservoir = rows.split_off(needed);
    let val = rows.split_off(test_size);
    Ok(TargetSplit {
        reservoir,
        val,
        test: rows,
    })
}

/// Uniform sample of `size` reservoir entries without replacement, in
/// sampling order.
pub fn subsample(reservoir: &[usize], size: usize, seed: u64) -> Result<Vec<usize>> {
    if size > reservoir.len() {
        return Err(Error::InsufficientData {
            needed: size,
            available: reservoir.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, reservoir.len(), size)
        .into_iter()
        .map(|i| reservoir[i])
        .collect())
}
