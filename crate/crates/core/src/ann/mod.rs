//! Euclidean nearest-neighbor search over a [`PoolView`]: an HNSW graph
//! ([`AnnIndex`]) and the exact scan it is checked against.
//!
//! Results are always ordered by `(distance, row)` ascending, and reported
//! distances are exact for the returned rows; the approximation only affects
//! which rows come back.

mod hnsw;
mod persist;

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::metric::squared_l2;
use crate::par::{self, Parallelism};
use crate::pool::PoolView;

pub use hnsw::{AnnIndex, HnswParams, DEFAULT_EXACT_THRESHOLD};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub distance: f64,
}

impl Neighbor {
    /// Total order on `(distance, row)`.
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.row.cmp(&other.row))
    }
}

pub(crate) fn check_query(view: &PoolView, query: &[f32]) -> Result<()> {
    if query.len() != view.dim() {
        return Err(Error::DimMismatch {
            expected: view.dim(),
            got: query.len(),
        });
    }
    Ok(())
}

/// Exact top-`k` by a full scan of the view.
pub fn brute_force_search(view: &PoolView, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    check_query(view, query)?;
    let vectors = view.pool().vectors();
    let mut all: Vec<(f64, usize)> = view
        .rows()
        .iter()
        .map(|&row| (squared_l2(query, vectors.row(row)), row))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(all.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp);
    Ok(all
        .into_iter()
        .map(|(d2, row)| Neighbor {
            row,
            distance: d2.sqrt(),
        })
        .collect())
}

/// [`brute_force_search`] for a batch of queries.
pub fn brute_force_batch(
    view: &PoolView,
    queries: &[Vec<f32>],
    k: usize,
    par: Parallelism,
) -> Result<Vec<Vec<Neighbor>>> {
    par::map_slice(queries, par, |_, q| brute_force_search(view, q, k))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{Instance, Pool, VectorBlock};
    use std::sync::Arc;

    fn view_of(dim: usize, rows: &[Vec<f32>]) -> PoolView {
        let instances = (0..rows.len())
            .map(|id| Instance {
                id,
                text: format!("t{id}"),
                label: 0,
                language: "en".into(),
                source_task: "T".into(),
            })
            .collect();
        let pool = Pool::new(instances, VectorBlock::from_rows(dim, rows).unwrap()).unwrap();
        PoolView::all(Arc::new(pool))
    }

    #[test]
    fn three_four_five_order() {
        let v = view_of(2, &[vec![3.0, 4.0], vec![1.0, 0.0]]);
        let r = brute_force_search(&v, &[0.0, 0.0], 2).unwrap();
        assert_eq!(r, vec![Neighbor { row: 1, distance: 1.0 }, Neighbor { row: 0, distance: 5.0 }]);
    }

    #[test]
    fn ties_by_row_and_oversized_k() {
        let v = view_of(2, &[vec![1.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0]]);
        let r = brute_force_search(&v, &[1.0, 1.0], 10).unwrap();
        let rows: Vec<usize> = r.iter().map(|n| n.row).collect();
        assert_eq!(rows, vec![0, 2, 1]);
        assert_eq!(r[0].distance, 0.0);
    }

    #[test]
    fn dim_checked() {
        let v = view_of(2, &[vec![1.0, 1.0]]);
        assert!(matches!(brute_force_search(&v, &[1.0], 1), Err(Error::DimMismatch { .. })));
    }
}
