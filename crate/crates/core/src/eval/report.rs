use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::experiment::{ResultRow, SweepResults};
use crate::error::{Error, Result};

/// Mean over seeds of one `(train_size, retrieval_count)` cell, or the mean
/// over train sizes of those (`train_size == None`, the AVG row).
#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub train_size: Option<usize>,
    pub retrieval_count: usize,
    /// Runs averaged into this row.
    pub runs: usize,
    pub f1_macro: f64,
    pub wall_time_ms: Option<f64>,
    pub provenance: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProvenanceEntry {
    pub target: String,
    pub source_task: String,
    /// Retrieved instances from this task, averaged over runs.
    pub mean_count: f64,
    /// Share of all retrieved instances, in percent.
    pub percent: f64,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_map<'a>(maps: impl Iterator<Item = &'a BTreeMap<String, f64>> + Clone, n: usize) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for m in maps {
        for (k, v) in m {
            *out.entry(k.clone()).or_default() += v;
        }
    }
    for v in out.values_mut() {
        *v /= n as f64;
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut groups: BTreeMap<(usize, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.train_size, r.retrieval_count)).or_default().push(r);
    }
    let mut cells = Vec::new();
    for ((size, count), g) in &groups {
        let prov: Vec<BTreeMap<String, f64>> = g
            .iter()
            .map(|r| r.retrieved_provenance.iter().map(|(k, &v)| (k.clone(), v as f64)).collect())
            .collect();
        let wall = if g.iter().all(|r| r.wall_time_ms.is_some()) {
            Some(mean(g.iter().map(|r| r.wall_time_ms.unwrap() as f64)))
        } else {
            None
        };
        cells.push(CellSummary {
            train_size: Some(*size),
            retrieval_count: *count,
            runs: g.len(),
            f1_macro: mean(g.iter().map(|r| r.f1_macro)),
            wall_time_ms: wall,
            provenance: mean_map(prov.iter(), g.len()),
        });
    }
    cells
}

fn averages(cells: &[CellSummary]) -> Vec<CellSummary> {
    let counts: BTreeSet<usize> = cells.iter().map(|c| c.retrieval_count).collect();
    counts
        .into_iter()
        .map(|count| {
            let g: Vec<&CellSummary> = cells.iter().filter(|c| c.retrieval_count == count).collect();
            let wall = if g.iter().all(|c| c.wall_time_ms.is_some()) {
                Some(mean(g.iter().map(|c| c.wall_time_ms.unwrap())))
            } else {
                None
            };
            CellSummary {
                train_size: None,
                retrieval_count: count,
                runs: g.iter().map(|c| c.runs).sum(),
                f1_macro: mean(g.iter().map(|c| c.f1_macro)),
                wall_time_ms: wall,
                provenance: mean_map(g.iter().map(|c| &c.provenance), g.len()),
            }
        })
        .collect()
}

impl SweepResults {
    /// Per-cell means followed by one AVG row per retrieval count.
    pub fn summaries(&self) -> Vec<CellSummary> {
        let mut cells = summarize(&self.rows);
        let avg = averages(&cells);
        cells.extend(avg);
        cells
    }

    fn tasks(&self) -> BTreeSet<String> {
        self.rows
            .iter()
            .flat_map(|r| r.retrieved_provenance.keys().cloned())
            .collect()
    }

    /// The results table. Columns are fixed: `train_size, retrieval_count,
    /// seed, f1_macro, wall_time_ms`, then one `prov_<task>` per source task
    /// in sorted order. `seed` is `mean` since rows average over seeds.
    pub fn to_csv(&self) -> String {
        let tasks = self.tasks();
        let mut out = String::from("train_size,retrieval_count,seed,f1_macro,wall_time_ms");
        for t in &tasks {
            let _ = write!(out, ",prov_{t}");
        }
        out.push('\n');
        for c in self.summaries() {
            let size = c.train_size.map_or("AVG".to_string(), |s| s.to_string());
            let _ = write!(
                out,
                "{size},{},mean,{},{}",
                c.retrieval_count,
                c.f1_macro,
                fmt_opt(c.wall_time_ms)
            );
            for t in &tasks {
                let _ = write!(out, ",{}", c.provenance.get(t).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }

    /// One line per run, in canonical order.
    pub fn runs_csv(&self) -> String {
        let tasks = self.tasks();
        let mut out = String::from("train_size,retrieval_count,seed,f1_macro,wall_time_ms,train_count,single_label");
        for t in &tasks {
            let _ = write!(out, ",prov_{t}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                r.train_size,
                r.retrieval_count,
                r.seed,
                r.f1_macro,
                r.wall_time_ms.map(|w| w.to_string()).unwrap_or_default(),
                r.train_count,
                r.single_label
            );
            for t in &tasks {
                let _ = write!(out, ",{}", r.retrieved_provenance.get(t).copied().unwrap_or(0));
            }
            out.push('\n');
        }
        out
    }

    pub fn provenance(&self, top_n: Option<usize>) -> Vec<ProvenanceEntry> {
        provenance_report(&self.rows, &self.target_name, top_n)
    }

    pub fn provenance_csv(&self, top_n: Option<usize>) -> String {
        let mut out = String::from("target,source_task,mean_count,percent\n");
        for e in self.provenance(top_n) {
            let _ = writeln!(out, "{},{},{},{}", e.target, e.source_task, e.mean_count, e.percent);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_csv())
    }

    pub fn write_runs_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.runs_csv())
    }

    pub fn write_provenance_csv(&self, path: impl AsRef<Path>, top_n: Option<usize>) -> Result<()> {
        write_file(path.as_ref(), &self.provenance_csv(top_n))
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-source-task retrieval counts over the retrieving rows (count > 0),
/// averaged per row, sorted by count descending then task name. Percentages
/// are relative to everything retrieved, before any `top_n` cut.
pub fn provenance_report(rows: &[ResultRow], target: &str, top_n: Option<usize>) -> Vec<ProvenanceEntry> {
    let retrieving: Vec<&ResultRow> = rows.iter().filter(|r| r.retrieval_count > 0).collect();
    if retrieving.is_empty() {
        return Vec::new();
    }
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &retrieving {
        for (t, &c) in &r.retrieved_provenance {
            *totals.entry(t.as_str()).or_default() += c;
        }
    }
    let grand: usize = totals.values().sum();
    let n = retrieving.len() as f64;
    let mut entries: Vec<ProvenanceEntry> = totals
        .into_iter()
        .map(|(t, c)| ProvenanceEntry {
            target: target.to_string(),
            source_task: t.to_string(),
            mean_count: c as f64 / n,
            percent: if grand == 0 { 0.0 } else { 100.0 * c as f64 / grand as f64 },
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_count
            .total_cmp(&a.mean_count)
            .then_with(|| a.source_task.cmp(&b.source_task))
    });
    if let Some(n) = top_n {
        entries.truncate(n);
    }
    entries
}
