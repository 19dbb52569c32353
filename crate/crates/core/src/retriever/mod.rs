//! Retrieval-set construction.
//!
//! Every target vector queries the index for its `k` nearest pool rows. The
//! per-query lists are merged, rows whose texts are byte-identical collapse to
//! the occurrence with the smallest `(distance, row)`, and `k` doubles until
//! at least `R` unique texts survive. The survivors are ranked by
//! `(distance to the closest query, row)` and cut to exactly `R`.
//!
//! With [`MmrConfig`] set, each query instead draws
//! `candidate_multiplier × ceil(R / m)` nearest unique-text candidates and
//! keeps `ceil(R / m)` of them by MMR; merging, top-up and the final cut are
//! the same.

mod mmr;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use crate::ann::{AnnIndex, Neighbor};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::pool::{write_retrieved_manifest, Exclusions, Instance, Pool, RetrievedRecord};

pub use mmr::{mmr_select, MmrConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalConfig {
    /// `R`: how many unique instances to return.
    pub total_r: usize,
    pub exclusions: Exclusions,
    pub mmr: Option<MmrConfig>,
    /// Initial per-query `k`; defaults to `ceil(R / m)`.
    pub k_init: Option<usize>,
    pub parallelism: Parallelism,
}

impl RetrievalConfig {
    pub fn new(total_r: usize) -> Self {
        Self {
            total_r,
            exclusions: Exclusions::default(),
            mmr: None,
            k_init: None,
            parallelism: Parallelism::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_r == 0 {
            return Err(Error::Config("total_r must be positive".into()));
        }
        if self.k_init == Some(0) {
            return Err(Error::Config("k_init must be positive".into()));
        }
        if let Some(m) = &self.mmr {
            m.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub query_index: usize,
    /// 0-based position in that query's neighbor list.
    pub rank: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievedItem {
    pub row: usize,
    pub instance: Instance,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievedSet {
    pub items: Vec<RetrievedItem>,
    pub config: RetrievalConfig,
}

impl RetrievedSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn rows(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.row).collect()
    }

    /// Retrieved counts per source task.
    pub fn task_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for it in &self.items {
            *out.entry(it.instance.source_task.clone()).or_default() += 1;
        }
        out
    }

    pub fn to_records(&self) -> Vec<RetrievedRecord> {
        self.items
            .iter()
            .map(|it| RetrievedRecord {
                text: it.instance.text.clone(),
                label: it.instance.label as i64,
                lang: it.instance.language.clone(),
                task: it.instance.source_task.clone(),
                src_row: it.row,
                query_index: it.provenance.query_index,
                rank: it.provenance.rank,
                distance: it.provenance.distance,
            })
            .collect()
    }

    /// Writes the set in manifest format with provenance fields.
    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        write_retrieved_manifest(path.as_ref(), &self.to_records())
    }
}

/// Per-query top-`k`, indexed by query position.
pub fn topk_union(index: &AnnIndex, queries: &[Vec<f32>], k: usize) -> Result<Vec<Vec<Neighbor>>> {
    topk_union_with(index, queries, k, Parallelism::default())
}

pub fn topk_union_with(
    index: &AnnIndex,
    queries: &[Vec<f32>],
    k: usize,
    par: Parallelism,
) -> Result<Vec<Vec<Neighbor>>> {
    if queries.is_empty() {
        return Err(Error::EmptyData);
    }
    par::map_slice(queries, par, |_, q| index.search(q, k))
        .into_iter()
        .collect()
}

#[derive(Clone, Copy)]
struct Hit {
    row: usize,
    prov: Provenance,
}

fn hit_key(h: &Hit) -> (f64, usize) {
    (h.prov.distance, h.row)
}

fn key_lt(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt()
}

/// Collapses hits to one per row (closest query wins, then lower query
/// index), then to one per text (smallest `(distance, row)` wins). Output is
/// sorted by `(distance, row)`.
fn merge_hits(pool: &Pool, hits: impl IntoIterator<Item = Hit>) -> Vec<Hit> {
    let mut by_row: HashMap<usize, Hit> = HashMap::new();
    for h in hits {
        by_row
            .entry(h.row)
            .and_modify(|cur| {
                let better = (h.prov.distance, h.prov.query_index);
                let have = (cur.prov.distance, cur.prov.query_index);
                if better.0.total_cmp(&have.0).then(better.1.cmp(&have.1)).is_lt() {
                    *cur = h;
                }
            })
            .or_insert(h);
    }
    let mut by_text: HashMap<&str, Hit> = HashMap::new();
    for h in by_row.into_values() {
        let text = pool.instance(h.row).text.as_str();
        by_text
            .entry(text)
            .and_modify(|cur| {
                if key_lt(hit_key(&h), hit_key(cur)) {
                    *cur = h;
                }
            })
            .or_insert(h);
    }
    let mut out: Vec<Hit> = by_text.into_values().collect();
    out.sort_by(|a, b| a.prov.distance.total_cmp(&b.prov.distance).then(a.row.cmp(&b.row)));
    out
}

fn check_pool(index: &AnnIndex, pool: &Pool) -> Result<()> {
    let indexed: &Arc<Pool> = index.view().pool();
    if std::ptr::eq(indexed.as_ref(), pool) {
        return Ok(());
    }
    if indexed.len() != pool.len() || indexed.vectors().checksum() != pool.vectors().checksum() {
        return Err(Error::StaleIndex("pool differs from the one the index was built over".into()));
    }
    Ok(())
}

/// Builds the retrieval set for `target_vectors`.
///
/// Rows matching `config.exclusions` are skipped even if the index covers
/// them. Fails with `Shortfall` when the view holds fewer than `R` distinct
/// admissible texts.
pub fn retrieve(
    index: &AnnIndex,
    pool: &Pool,
    target_vectors: &[Vec<f32>],
    config: &RetrievalConfig,
) -> Result<RetrievedSet> {
    config.validate()?;
    check_pool(index, pool)?;
    if target_vectors.is_empty() {
        return Err(Error::EmptyData);
    }
    for q in target_vectors {
        if q.len() != pool.dim() {
            return Err(Error::DimMismatch {
                expected: pool.dim(),
                got: q.len(),
            });
        }
    }
    let hits = match &config.mmr {
        None => plain_hits(index, pool, target_vectors, config)?,
        Some(mmr) => mmr_hits(index, pool, target_vectors, config, mmr)?,
    };
    let items = hits
        .into_iter()
        .take(config.total_r)
        .map(|h| RetrievedItem {
            row: h.row,
            instance: pool.instance(h.row).clone(),
            provenance: h.prov,
        })
        .collect();
    Ok(RetrievedSet {
        items,
        config: config.clone(),
    })
}

fn initial_k(config: &RetrievalConfig, m: usize) -> usize {
    config.k_init.unwrap_or_else(|| config.total_r.div_ceil(m)).max(1)
}

fn plain_hits(index: &AnnIndex, pool: &Pool, queries: &[Vec<f32>], config: &RetrievalConfig) -> Result<Vec<Hit>> {
    let view_len = index.view().len();
    let mut k = initial_k(config, queries.len());
    loop {
        let k_eff = k.min(view_len);
        let lists = topk_union_with(index, queries, k_eff, config.parallelism)?;
        let hits = lists.iter().enumerate().flat_map(|(qi, list)| {
            list.iter()
                .enumerate()
                .filter(|(_, nb)| !config.exclusions.excludes(pool.instance(nb.row)))
                .map(move |(rank, nb)| Hit {
                    row: nb.row,
                    prov: Provenance {
                        query_index: qi,
                        rank,
                        distance: nb.distance,
                    },
                })
        });
        let merged = merge_hits(pool, hits);
        if merged.len() >= config.total_r {
            return Ok(merged);
        }
        if k_eff >= view_len {
            return Err(Error::Shortfall {
                achieved: merged.len(),
                requested: config.total_r,
            });
        }
        k = k.saturating_mul(2);
    }
}

/// The `want` nearest admissible rows with distinct texts, with their rank in
/// the query's raw neighbor list. Fewer only when the view runs out.
fn nearest_unique(
    index: &AnnIndex,
    pool: &Pool,
    query: &[f32],
    want: usize,
    exclusions: &Exclusions,
) -> Result<Vec<(usize, Neighbor)>> {
    let view_len = index.view().len();
    let mut k = want.max(1);
    loop {
        let k_eff = k.min(view_len);
        let list = index.search(query, k_eff)?;
        let mut seen = std::collections::HashSet::new();
        let picked: Vec<(usize, Neighbor)> = list
            .into_iter()
            .enumerate()
            .filter(|(_, nb)| {
                let inst = pool.instance(nb.row);
                !exclusions.excludes(inst) && seen.insert(inst.text.as_str())
            })
            .take(want)
            .collect();
        if picked.len() >= want || k_eff >= view_len {
            return Ok(picked);
        }
        k = k.saturating_mul(2);
    }
}

fn mmr_hits(
    index: &AnnIndex,
    pool: &Pool,
    queries: &[Vec<f32>],
    config: &RetrievalConfig,
    mmr: &MmrConfig,
) -> Result<Vec<Hit>> {
    let view_len = index.view().len();
    let mut per_query = initial_k(config, queries.len());
    loop {
        let want = per_query.saturating_mul(mmr.candidate_multiplier);
        let picks = par::map_slice(queries, config.parallelism, |qi, q| -> Result<Vec<Hit>> {
            let cands = nearest_unique(index, pool, q, want, &config.exclusions)?;
            if cands.is_empty() {
                return Ok(Vec::new());
            }
            let vecs: Vec<(usize, &[f32])> = cands.iter().map(|(_, nb)| (nb.row, pool.vector(nb.row))).collect();
            let chosen = mmr_select(q, &vecs, per_query.min(cands.len()), mmr.lambda)?;
            let by_row: HashMap<usize, (usize, Neighbor)> = cands.iter().map(|&(rank, nb)| (nb.row, (rank, nb))).collect();
            Ok(chosen
                .into_iter()
                .map(|row| {
                    let (rank, nb) = by_row[&row];
                    Hit {
                        row,
                        prov: Provenance {
                            query_index: qi,
                            rank,
                            distance: nb.distance,
                        },
                    }
                })
                .collect())
        });
        let mut all = Vec::new();
        for p in picks {
            all.extend(p?);
        }
        let merged = merge_hits(pool, all);
        if merged.len() >= config.total_r {
            return Ok(merged);
        }
        if per_query >= view_len {
            return Err(Error::Shortfall {
                achieved: merged.len(),
                requested: config.total_r,
            });
        }
        per_query = per_query.saturating_mul(2);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::HnswParams;
    use crate::pool::{PoolView, VectorBlock};

    fn pool_1d(points: &[(f32, &str, &str)]) -> Arc<Pool> {
        let instances = points
            .iter()
            .enumerate()
            .map(|(id, (_, text, lang))| Instance {
                id,
                text: text.to_string(),
                label: (id % 2) as u8,
                language: lang.to_string(),
                source_task: format!("T_{lang}"),
            })
            .collect();
        let data = points.iter().flat_map(|(x, _, _)| [*x, 1.0]).collect();
        Arc::new(Pool::new(instances, VectorBlock::new(2, data).unwrap()).unwrap())
    }

    fn index(pool: &Arc<Pool>) -> AnnIndex {
        AnnIndex::build(PoolView::all(Arc::clone(pool)), HnswParams::default()).unwrap()
    }

    #[test]
    fn exhaustive_single_query() {
        let p = pool_1d(&[(5.0, "e", "en"), (1.0, "a", "en"), (3.0, "c", "en"), (2.0, "b", "en"), (4.0, "d", "en")]);
        let idx = index(&p);
        let set = retrieve(&idx, &p, &[vec![0.0, 1.0]], &RetrievalConfig::new(5)).unwrap();
        assert_eq!(set.rows(), vec![1, 3, 2, 4, 0]);
        assert_eq!(set.items[0].provenance.rank, 0);
        assert_eq!(set.items[0].provenance.distance, 1.0);
    }

    #[test]
    fn duplicate_text_tops_up() {
        let p = pool_1d(&[(1.0, "dup", "en"), (2.0, "dup", "en"), (3.0, "x", "en"), (4.0, "y", "en")]);
        let idx = index(&p);
        let set = retrieve(&idx, &p, &[vec![0.0, 1.0]], &RetrievalConfig::new(2)).unwrap();
        assert_eq!(set.rows(), vec![0, 2]);
    }

    #[test]
    fn exclusions_and_shortfall() {
        let p = pool_1d(&[(1.0, "a", "en"), (2.0, "b", "tr"), (3.0, "c", "en"), (4.0, "d", "de")]);
        let idx = index(&p);
        let mut cfg = RetrievalConfig::new(2);
        cfg.exclusions = Exclusions::new(["en"], Vec::<String>::new());
        let set = retrieve(&idx, &p, &[vec![0.0, 1.0]], &cfg).unwrap();
        assert_eq!(set.rows(), vec![1, 3]);
        cfg.total_r = 3;
        assert!(matches!(
            retrieve(&idx, &p, &[vec![0.0, 1.0]], &cfg),
            Err(Error::Shortfall { achieved: 2, requested: 3 })
        ));
        cfg.exclusions = Exclusions::new(["en", "tr", "de"], Vec::<String>::new());
        cfg.total_r = 1;
        assert!(matches!(
            retrieve(&idx, &p, &[vec![0.0, 1.0]], &cfg),
            Err(Error::Shortfall { achieved: 0, .. })
        ));
    }

    #[test]
    fn closest_query_owns_provenance() {
        let p = pool_1d(&[(0.0, "a", "en"), (10.0, "b", "en"), (5.0, "c", "en")]);
        let idx = index(&p);
        let qs = vec![vec![9.0, 1.0], vec![1.0, 1.0]];
        let set = retrieve(&idx, &p, &qs, &RetrievalConfig::new(2)).unwrap();
        assert_eq!(set.rows(), vec![0, 1]);
        assert!(set.items.iter().all(|i| i.provenance.distance == 1.0));
        assert_eq!(set.items[0].provenance.query_index, 1);
        assert_eq!(set.items[1].provenance.query_index, 0);
    }

    #[test]
    fn topk_union_identical_queries() {
        let p = pool_1d(&[(0.0, "a", "en"), (10.0, "b", "en"), (5.0, "c", "en")]);
        let idx = index(&p);
        let lists = topk_union(&idx, &[vec![4.0, 1.0], vec![4.0, 1.0]], 1).unwrap();
        assert_eq!(lists[0], lists[1]);
        assert_eq!(lists[0][0].row, 2);
        assert!(matches!(topk_union(&idx, &[], 1), Err(Error::EmptyData)));
    }

    #[test]
    fn input_validation() {
        let p = pool_1d(&[(0.0, "a", "en")]);
        let idx = index(&p);
        assert!(matches!(
            retrieve(&idx, &p, &[vec![0.0]], &RetrievalConfig::new(1)),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(retrieve(&idx, &p, &[], &RetrievalConfig::new(1)), Err(Error::EmptyData)));
        assert!(matches!(
            retrieve(&idx, &p, &[vec![0.0, 1.0]], &RetrievalConfig::new(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mmr_path_returns_exact_count() {
        let pts: Vec<(f32, String, &str)> = (0..40).map(|i| (i as f32, format!("t{}", i % 30), "en")).collect();
        let refs: Vec<(f32, &str, &str)> = pts.iter().map(|(x, t, l)| (*x, t.as_str(), *l)).collect();
        let p = pool_1d(&refs);
        let idx = index(&p);
        let mut cfg = RetrievalConfig::new(12);
        cfg.mmr = Some(MmrConfig::default());
        let set = retrieve(&idx, &p, &[vec![3.0, 1.0], vec![20.0, 1.0]], &cfg).unwrap();
        assert_eq!(set.len(), 12);
        let texts: std::collections::HashSet<&str> = set.items.iter().map(|i| i.instance.text.as_str()).collect();
        assert_eq!(texts.len(), 12);
        cfg.total_r = 31;
        assert!(matches!(
            retrieve(&idx, &p, &[vec![3.0, 1.0]], &cfg),
            Err(Error::Shortfall { achieved: 30, .. })
        ));
    }

    #[test]
    fn export_carries_provenance() {
        let p = pool_1d(&[(1.0, "a", "en"), (2.0, "b", "en")]);
        let idx = index(&p);
        let set = retrieve(&idx, &p, &[vec![0.0, 1.0]], &RetrievalConfig::new(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.pool.jsonl");
        set.write_manifest(&path).unwrap();
        let back = crate::pool::read_retrieved_manifest(&path).unwrap();
        assert_eq!(back, set.to_records());
        assert_eq!(back[1].src_row, 1);
        assert_eq!(back[1].distance, 2.0);
        assert_eq!(set.task_counts()["T_en"], 2);
    }
}
