//! Hierarchical navigable small world graph.
//!
//! Nodes are the view's rows in ascending order, inserted one at a time, so
//! node ids and pool rows sort identically and a build is a pure function of
//! `(view, params)`. Layers above 0 keep at most `max_neighbors` links per
//! node; layer 0 keeps at most `2 * max_neighbors`. New nodes pick their links
//! with the diversity heuristic; overflowing back-link lists keep their
//! closest entries.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{brute_force_search, check_query, Neighbor};
use crate::error::{Error, Result};
use crate::metric::squared_l2;
use crate::pool::{PoolView, VectorBlock};

/// Below this many rows a view is searched exhaustively.
pub const DEFAULT_EXACT_THRESHOLD: usize = 2000;

const MAX_LEVEL: usize = 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HnswParams {
    /// Graph degree `M` for layers above 0. Layer 0 allows `2 * M`.
    pub max_neighbors: usize,
    pub ef_construction: usize,
    /// Default beam width for queries; raised to `k` when `k` is larger.
    pub ef_search: usize,
    pub rng_seed: u64,
    /// Views with fewer rows than this are answered by a full scan.
    pub exact_threshold: usize,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            max_neighbors: 128,
            ef_construction: 200,
            ef_search: 128,
            rng_seed: 0x5EED,
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
        }
    }
}

impl HnswParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_neighbors < 2 {
            return Err(Error::Config("max_neighbors must be at least 2".into()));
        }
        if self.ef_construction < self.max_neighbors {
            return Err(Error::Config(format!(
                "ef_construction ({}) must be >= max_neighbors ({})",
                self.ef_construction, self.max_neighbors
            )));
        }
        if self.ef_search == 0 {
            return Err(Error::Config("ef_search must be positive".into()));
        }
        if self.max_neighbors > u32::MAX as usize
            || self.ef_construction > u32::MAX as usize
            || self.ef_search > u32::MAX as usize
        {
            return Err(Error::Config("HNSW parameters must fit in 32 bits".into()));
        }
        Ok(())
    }

    pub(crate) fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.max_neighbors
        } else {
            self.max_neighbors
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Scored {
    pub d2: f64,
    pub id: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Visited(Vec<u64>);

impl Visited {
    fn new(n: usize) -> Self {
        Visited(vec![0; n.div_ceil(64)])
    }

    fn clear(&mut self) {
        self.0.fill(0);
    }

    /// Marks `id`; returns true if it was not marked before.
    #[inline]
    fn insert(&mut self, id: u32) -> bool {
        let (w, b) = ((id / 64) as usize, id % 64);
        let fresh = self.0[w] & (1 << b) == 0;
        self.0[w] |= 1 << b;
        fresh
    }
}

/// Node-local vector access shared by the builder and the finished index.
struct Space<'a> {
    vectors: &'a VectorBlock,
    rows: &'a [usize],
}

impl Space<'_> {
    #[inline]
    fn vector(&self, id: u32) -> &[f32] {
        self.vectors.row(self.rows[id as usize])
    }

    #[inline]
    fn d2(&self, q: &[f32], id: u32) -> f64 {
        squared_l2(q, self.vector(id))
    }
}

/// Beam search on one layer. Returns up to `ef` nodes, ascending.
fn search_layer(
    space: &Space<'_>,
    links: &[Vec<Vec<u32>>],
    query: &[f32],
    entry: &[Scored],
    ef: usize,
    level: usize,
    visited: &mut Visited,
) -> Vec<Scored> {
    visited.clear();
    let mut candidates: BinaryHeap<Reverse<Scored>> = BinaryHeap::with_capacity(ef * 2);
    let mut found: BinaryHeap<Scored> = BinaryHeap::with_capacity(ef + 1);
    for &e in entry {
        if visited.insert(e.id) {
            candidates.push(Reverse(e));
            found.push(e);
            if found.len() > ef {
                found.pop();
            }
        }
    }
    while let Some(Reverse(c)) = candidates.pop() {
        if found.len() >= ef && c > *found.peek().unwrap() {
            break;
        }
        let Some(adj) = links[c.id as usize].get(level) else {
            continue;
        };
        for &n in adj {
            if !visited.insert(n) {
                continue;
            }
            let s = Scored {
                d2: space.d2(query, n),
                id: n,
            };
            if found.len() < ef || s < *found.peek().unwrap() {
                candidates.push(Reverse(s));
                found.push(s);
                if found.len() > ef {
                    found.pop();
                }
            }
        }
    }
    found.into_sorted_vec()
}

/// Walks down from the top layer to layer 1 greedily, returning the entry
/// point for layer-0 search.
fn descend(
    space: &Space<'_>,
    links: &[Vec<Vec<u32>>],
    query: &[f32],
    entry: u32,
    from_level: usize,
    to_level: usize,
    visited: &mut Visited,
) -> Scored {
    let mut best = Scored {
        d2: space.d2(query, entry),
        id: entry,
    };
    for level in (to_level + 1..=from_level).rev() {
        best = search_layer(space, links, query, &[best], 1, level, visited)[0];
    }
    best
}

#[derive(Clone, Debug)]
pub struct AnnIndex {
    pub(super) params: HnswParams,
    pub(super) view: PoolView,
    /// `links[node][level]`, one list per level the node lives on.
    pub(super) links: Vec<Vec<Vec<u32>>>,
    pub(super) entry: u32,
    pub(super) max_level: usize,
}

impl AnnIndex {
    /// Builds the graph over every selected row of `view`, in ascending row order.
    pub fn build(view: PoolView, params: HnswParams) -> Result<Self> {
        params.validate()?;
        if view.is_empty() {
            return Err(Error::EmptyView);
        }
        if view.len() > u32::MAX as usize {
            return Err(Error::Config("view too large for 32-bit node ids".into()));
        }
        let n = view.len();
        let level_mult = 1.0 / (params.max_neighbors as f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
        let levels: Vec<usize> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                ((-(1.0 - u).ln() * level_mult).floor() as usize).min(MAX_LEVEL)
            })
            .collect();

        let space = Space {
            vectors: view.pool().vectors(),
            rows: view.rows(),
        };
        let mut links: Vec<Vec<Vec<u32>>> = levels.iter().map(|&l| vec![Vec::new(); l + 1]).collect();
        // squared distances parallel to `links`, only needed while building
        let mut link_d2: Vec<Vec<Vec<f64>>> = levels.iter().map(|&l| vec![Vec::new(); l + 1]).collect();
        let mut visited = Visited::new(n);
        let mut entry = 0u32;
        let mut max_level = levels[0];

        for node in 1..n as u32 {
            let level = levels[node as usize];
            let q = space.vector(node);
            let top = level.min(max_level);
            let start = descend(&space, &links, q, entry, max_level, top, &mut visited);
            let mut eps = vec![start];
            for lc in (0..=top).rev() {
                let found = search_layer(&space, &links, q, &eps, params.ef_construction, lc, &mut visited);
                let chosen = select_diverse(&space, &found, params.max_neighbors);
                links[node as usize][lc] = chosen.iter().map(|s| s.id).collect();
                link_d2[node as usize][lc] = chosen.iter().map(|s| s.d2).collect();
                let cap = params.max_links(lc);
                for s in &chosen {
                    add_back_link(&mut links, &mut link_d2, s.id, lc, node, s.d2, cap);
                }
                eps = found;
            }
            if level > max_level {
                max_level = level;
                entry = node;
            }
        }

        Ok(Self {
            params,
            view,
            links,
            entry,
            max_level,
        })
    }

    pub fn params(&self) -> &HnswParams {
        &self.params
    }

    pub fn view(&self) -> &PoolView {
        &self.view
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Pool rows linked from `row` on `level`, or `None` if the row is not
    /// a node on that level.
    pub fn neighbors_of(&self, row: usize, level: usize) -> Option<Vec<usize>> {
        let node = self.view.rows().binary_search(&row).ok()?;
        let adj = self.links[node].get(level)?;
        Some(adj.iter().map(|&n| self.view.rows()[n as usize]).collect())
    }

    /// Largest adjacency list on `level`.
    pub fn max_degree(&self, level: usize) -> usize {
        self.links
            .iter()
            .filter_map(|l| l.get(level))
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
        self.search_with_ef(query, k, self.params.ef_search)
    }

    /// Top-`k` with an explicit beam width; the effective width is `max(ef, k)`.
    pub fn search_with_ef(&self, query: &[f32], k: usize, ef: usize) -> Result<Vec<Neighbor>> {
        check_query(&self.view, query)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        if self.view.len() < self.params.exact_threshold || k >= self.view.len() {
            return brute_force_search(&self.view, query, k);
        }
        let ef = ef.max(k).max(1);
        let space = Space {
            vectors: self.view.pool().vectors(),
            rows: self.view.rows(),
        };
        let mut visited = Visited::new(self.len());
        let start = descend(&space, &self.links, query, self.entry, self.max_level, 0, &mut visited);
        let found = search_layer(&space, &self.links, query, &[start], ef, 0, &mut visited);
        Ok(found
            .into_iter()
            .take(k)
            .map(|s| Neighbor {
                row: self.view.rows()[s.id as usize],
                distance: s.d2.sqrt(),
            })
            .collect())
    }
}

/// Keeps a candidate only if it is closer to the base than to every
/// neighbor already kept. `sorted` is ascending by distance to the base.
fn select_diverse(space: &Space<'_>, sorted: &[Scored], m: usize) -> Vec<Scored> {
    let mut kept: Vec<Scored> = Vec::with_capacity(m);
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let cv = space.vector(c.id);
        if kept.iter().all(|k| squared_l2(cv, space.vector(k.id)) >= c.d2) {
            kept.push(c);
        }
    }
    kept
}

fn add_back_link(
    links: &mut [Vec<Vec<u32>>],
    link_d2: &mut [Vec<Vec<f64>>],
    from: u32,
    level: usize,
    to: u32,
    d2: f64,
    cap: usize,
) {
    let ids = &mut links[from as usize][level];
    let ds = &mut link_d2[from as usize][level];
    let key = Scored { d2, id: to };
    let pos = ids
        .iter()
        .zip(ds.iter())
        .position(|(&id, &d)| Scored { d2: d, id } > key)
        .unwrap_or(ids.len());
    ids.insert(pos, to);
    ds.insert(pos, d2);
    if ids.len() > cap {
        ids.truncate(cap);
        ds.truncate(cap);
    }
}
