#![allow(dead_code)]

use std::collections::BTreeMap;

use xlaug::pool::Exclusions;
use xlaug::{Pool, PoolView};

pub fn naive_distance(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for i in 0..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        s += d * d;
    }
    s.sqrt()
}

pub fn naive_cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..a.len() {
        ab += a[i] as f64 * b[i] as f64;
        aa += a[i] as f64 * a[i] as f64;
        bb += b[i] as f64 * b[i] as f64;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// Exact top-k of the view by sorting every distance.
pub fn exact_topk(view: &PoolView, q: &[f32], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = view
        .rows()
        .iter()
        .map(|&r| (r, naive_distance(q, view.pool().vector(r))))
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleItem {
    pub row: usize,
    pub query_index: usize,
    pub rank: usize,
    pub distance: f64,
}

/// Straight-line retrieval: per-query exact top-k, union, keep the best
/// provenance per row and then per text, double k until R survive, truncate
/// by (distance, row). `None` means shortfall.
pub fn oracle_retrieve(
    view: &PoolView,
    queries: &[Vec<f32>],
    r: usize,
    exclusions: &Exclusions,
    k_init: Option<usize>,
) -> Option<Vec<OracleItem>> {
    let pool: &Pool = view.pool();
    let n = view.len();
    let mut k = k_init.unwrap_or(r.div_ceil(queries.len())).max(1);
    loop {
        let keff = if k < n { k } else { n };
        let mut all: Vec<OracleItem> = Vec::new();
        for (qi, q) in queries.iter().enumerate() {
            for (rank, (row, d)) in exact_topk(view, q, keff).into_iter().enumerate() {
                let inst = pool.instance(row);
                if exclusions.languages.contains(&inst.language) || exclusions.tasks.contains(&inst.source_task) {
                    continue;
                }
                all.push(OracleItem {
                    row,
                    query_index: qi,
                    rank,
                    distance: d,
                });
            }
        }
        // Best provenance per row: smallest distance, then smallest query index.
        all.sort_by(|a, b| {
            a.row
                .cmp(&b.row)
                .then(a.distance.partial_cmp(&b.distance).unwrap())
                .then(a.query_index.cmp(&b.query_index))
        });
        let mut per_row: Vec<OracleItem> = Vec::new();
        for it in all {
            if per_row.last().map(|l| l.row) != Some(it.row) {
                per_row.push(it);
            }
        }
        // Best per text: smallest (distance, row).
        per_row.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap().then(a.row.cmp(&b.row)));
        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        let mut unique = Vec::new();
        for it in per_row {
            if seen.insert(pool.instance(it.row).text.as_str(), ()).is_none() {
                unique.push(it);
            }
        }
        if unique.len() >= r {
            unique.truncate(r);
            return Some(unique);
        }
        if keff >= n {
            return None;
        }
        k *= 2;
    }
}

/// Greedy MMR recomputing every score from scratch at every step. The first
/// pick is the most relevant candidate; ties go to the lower row.
pub fn oracle_mmr(query: &[f32], cands: &[(usize, Vec<f32>)], k: usize, lambda: f64) -> Vec<usize> {
    let mut selected: Vec<usize> = Vec::new();
    while selected.len() < k {
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, (row, v)) in cands.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let rel = naive_cosine(v, query);
            let score = if selected.is_empty() {
                rel
            } else {
                let red = selected
                    .iter()
                    .map(|&s| naive_cosine(v, &cands[s].1))
                    .fold(f64::NEG_INFINITY, f64::max);
                lambda * rel - (1.0 - lambda) * red
            };
            let take = match best {
                None => true,
                Some((bs, br, _)) => score > bs || (score == bs && *row < br),
            };
            if take {
                best = Some((score, *row, i));
            }
        }
        selected.push(best.unwrap().2);
    }
    selected.into_iter().map(|i| cands[i].0).collect()
}

/// Loss written out directly, for finite differences.
pub fn oracle_loss(w: &[f64], b: f64, batch: &[(Vec<f32>, u8)], l2: f64) -> f64 {
    let mut total = 0.0;
    for (x, y) in batch {
        let z: f64 = w.iter().zip(x).map(|(w, x)| w * *x as f64).sum::<f64>() + b;
        let p = (1.0 / (1.0 + (-z).exp())).clamp(1e-12, 1.0 - 1e-12);
        let y = *y as f64;
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    total / batch.len() as f64 + l2 * w.iter().map(|w| w * w).sum::<f64>()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
