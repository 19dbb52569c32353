//! The labeled multilingual pool: instance metadata aligned row-for-row with
//! a dense `f32` vector block, plus filtered views and summary statistics.

mod manifest;
mod vecfile;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use manifest::{
    read_manifest, read_retrieved_manifest, write_manifest, write_retrieved_manifest, ManifestRecord,
    RetrievedRecord,
};
pub use vecfile::{read_vectors, write_vectors, VEC_MAGIC, VEC_VERSION};

/// One labeled text. `label` is 1 for hateful, 0 otherwise.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub id: usize,
    pub text: String,
    pub label: u8,
    pub language: String,
    pub source_task: String,
}

pub(crate) fn is_language_code(s: &str) -> bool {
    s.len() == 2 && s.bytes().all(|b| b.is_ascii_lowercase())
}

impl Instance {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.text.is_empty() {
            return Err("empty text".into());
        }
        if self.label > 1 {
            return Err(format!("label {} is not 0 or 1", self.label));
        }
        if !is_language_code(&self.language) {
            return Err(format!("language {:?} is not a two-letter lowercase code", self.language));
        }
        Ok(())
    }
}

/// `count × dim` row-major vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorBlock {
    dim: usize,
    data: Vec<f32>,
}

impl VectorBlock {
    /// Fails with `BadHeader` on `dim == 0` or a ragged buffer and with
    /// `NonFiniteVector` on the first NaN/Inf row.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadHeader("dim must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::BadHeader(format!(
                "data length {} is not a multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteVector { row: pos / dim });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// SHA-256 of the exact `.vec` encoding of this block.
    pub fn checksum(&self) -> [u8; 32] {
        vecfile::checksum(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pool {
    instances: Vec<Instance>,
    vectors: VectorBlock,
}

impl Pool {
    pub fn new(instances: Vec<Instance>, vectors: VectorBlock) -> Result<Self> {
        if instances.len() != vectors.count() {
            return Err(Error::CountMismatch {
                manifest: instances.len(),
                vectors: vectors.count(),
            });
        }
        for (i, inst) in instances.iter().enumerate() {
            if inst.id != i {
                return Err(Error::MalformedRecord {
                    line: i + 1,
                    reason: format!("id {} does not match row {i}", inst.id),
                });
            }
            inst.validate()
                .map_err(|reason| Error::MalformedRecord { line: i + 1, reason })?;
        }
        Ok(Self { instances, vectors })
    }

    /// Builds a pool from manifest records; ids are the row indices.
    pub fn from_records(records: Vec<ManifestRecord>, vectors: VectorBlock) -> Result<Self> {
        let instances = records
            .into_iter()
            .enumerate()
            .map(|(id, r)| r.into_instance(id))
            .collect();
        Self::new(instances, vectors)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance(&self, row: usize) -> &Instance {
        &self.instances[row]
    }

    pub fn vectors(&self) -> &VectorBlock {
        &self.vectors
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        self.vectors.row(row)
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.instances.iter().map(|i| i.language.clone()).collect()
    }
}

/// Reads a `.pool.jsonl` manifest and its `.vec` companion.
pub fn load_pool(manifest_path: impl AsRef<Path>, vectors_path: impl AsRef<Path>) -> Result<Pool> {
    let records = read_manifest(manifest_path.as_ref())?;
    let vectors = read_vectors(vectors_path.as_ref())?;
    if records.len() != vectors.count() {
        return Err(Error::CountMismatch {
            manifest: records.len(),
            vectors: vectors.count(),
        });
    }
    Pool::from_records(records, vectors)
}

pub fn write_pool(
    pool: &Pool,
    manifest_path: impl AsRef<Path>,
    vectors_path: impl AsRef<Path>,
) -> Result<()> {
    let records: Vec<ManifestRecord> = pool.instances.iter().map(ManifestRecord::from).collect();
    write_manifest(manifest_path.as_ref(), &records)?;
    write_vectors(vectors_path.as_ref(), &pool.vectors)
}

/// A subset of pool rows, kept sorted ascending. Shares the pool.
#[derive(Clone, Debug)]
pub struct PoolView {
    pool: Arc<Pool>,
    selected: Vec<usize>,
}

impl PoolView {
    pub fn all(pool: Arc<Pool>) -> Self {
        let selected = (0..pool.len()).collect();
        Self { pool, selected }
    }

    /// Rows are sorted and deduplicated; out-of-range rows are dropped.
    pub fn from_rows(pool: Arc<Pool>, rows: impl IntoIterator<Item = usize>) -> Self {
        let n = pool.len();
        let set: BTreeSet<usize> = rows.into_iter().filter(|&r| r < n).collect();
        Self {
            pool,
            selected: set.into_iter().collect(),
        }
    }

    pub fn pool(&self) -> &Arc<Pool> {
        &self.pool
    }

    pub fn rows(&self) -> &[usize] {
        &self.selected
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.pool.dim()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.selected.binary_search(&row).is_ok()
    }
}

/// Language and task exclusions applied to a pool.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Exclusions {
    pub languages: BTreeSet<String>,
    pub tasks: BTreeSet<String>,
}

impl Exclusions {
    pub fn new<L, T>(languages: L, tasks: T) -> Self
    where
        L: IntoIterator,
        L::Item: Into<String>,
        T: IntoIterator,
        T::Item: Into<String>,
    {
        Self {
            languages: languages.into_iter().map(Into::into).collect(),
            tasks: tasks.into_iter().map(Into::into).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.languages.is_empty() && self.tasks.is_empty()
    }

    pub fn excludes(&self, inst: &Instance) -> bool {
        self.languages.contains(&inst.language) || self.tasks.contains(&inst.source_task)
    }
}

pub fn filter_pool(
    pool: &Arc<Pool>,
    exclude_languages: &BTreeSet<String>,
    exclude_tasks: &BTreeSet<String>,
) -> PoolView {
    let selected = pool
        .instances
        .iter()
        .filter(|i| !exclude_languages.contains(&i.language) && !exclude_tasks.contains(&i.source_task))
        .map(|i| i.id)
        .collect();
    PoolView {
        pool: Arc::clone(pool),
        selected,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LanguageStat {
    pub count: usize,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskStat {
    pub count: usize,
    pub hate_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    pub total: usize,
    pub hate_fraction: f64,
    pub languages: BTreeMap<String, LanguageStat>,
    pub tasks: BTreeMap<String, TaskStat>,
}

pub fn pool_stats(pool: &Pool) -> StatsReport {
    let total = pool.len();
    let mut langs: BTreeMap<String, usize> = BTreeMap::new();
    let mut tasks: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut hate = 0usize;
    for inst in &pool.instances {
        *langs.entry(inst.language.clone()).or_default() += 1;
        let t = tasks.entry(inst.source_task.clone()).or_default();
        t.0 += 1;
        t.1 += inst.label as usize;
        hate += inst.label as usize;
    }
    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    StatsReport {
        total,
        hate_fraction: frac(hate, total),
        languages: langs
            .into_iter()
            .map(|(l, count)| {
                let percent = 100.0 * frac(count, total);
                (l, LanguageStat { count, percent })
            })
            .collect(),
        tasks: tasks
            .into_iter()
            .map(|(t, (count, pos))| {
                let hate_fraction = frac(pos, count);
                (t, TaskStat { count, hate_fraction })
            })
            .collect(),
    }
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total\t{}", self.total)?;
        writeln!(f, "hateful\t{:.2}%", 100.0 * self.hate_fraction)?;
        for (lang, s) in &self.languages {
            writeln!(f, "lang\t{lang}\t{}\t{:.2}%", s.count, s.percent)?;
        }
        for (task, s) in &self.tasks {
            writeln!(f, "task\t{task}\t{}\t{:.2}% hateful", s.count, 100.0 * s.hate_fraction)?;
        }
        Ok(())
    }
}
