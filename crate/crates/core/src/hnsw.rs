//! Hierarchical navigable small world graph.
//!
//! The graph stores adjacency only; every query names the vector store it
//! runs against, so one graph serves both the rotated vectors (adaptive
//! modes) and the originals (exact baselines).
//!
//! Query modes:
//!
//! - [`HnswMode::Plain`]: full-scan DCOs against the `N_ef`-th distance.
//! - [`HnswMode::Pd`]: partial-distance scan, same decisions as `Plain`.
//! - [`HnswMode::Plus`]: adaptive sampling against the `N_ef`-th distance.
//! - [`HnswMode::PlusPlus`]: adaptive sampling against the K-th exact
//!   distance (set `R1`); the estimate left by every DCO drives the routing
//!   set `R2` and the candidate queue.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::dataset::Dataset;
use crate::dco::{full_scan, partial_scan, sq_dist_fast, AdSampler, DcoConfig, Scan};
use crate::error::{invalid, Error, Result};
use crate::heap::{Neighbor, TopK};
use crate::rng::NormalStream;
use crate::{KnnResult, QueryStats};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HnswParams {
    /// Out-degree bound on layers above 0; layer 0 allows `2 * m`.
    pub m: usize,
    pub ef_construction: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 500,
            seed: crate::DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HnswMode {
    Plain,
    Pd,
    Plus,
    PlusPlus,
}

impl HnswMode {
    pub const ALL: [HnswMode; 4] = [HnswMode::Plain, HnswMode::Pd, HnswMode::Plus, HnswMode::PlusPlus];

    pub fn label(self) -> &'static str {
        match self {
            HnswMode::Plain => "HNSW",
            HnswMode::Pd => "HNSW*",
            HnswMode::Plus => "HNSW+",
            HnswMode::PlusPlus => "HNSW++",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, HnswMode::Plus | HnswMode::PlusPlus)
    }
}

/// Layered adjacency lists.
#[derive(Clone, Debug, PartialEq)]
pub struct HnswGraph {
    params: HnswParams,
    /// Layer-0 lists in fixed slots of `1 + 2m` words: count, then ids.
    base: Vec<u32>,
    /// `upper[v][l - 1]`: neighbors of `v` on layer `l`, for `1 <= l <= level(v)`.
    upper: Vec<Vec<Vec<u32>>>,
    entry: u32,
    max_layer: usize,
}

impl HnswGraph {
    /// Inserts the rows of `ds` in id order.
    pub fn build(ds: &Dataset, params: HnswParams) -> Result<Self> {
        if params.m < 2 {
            return Err(invalid("M must be at least 2"));
        }
        if params.ef_construction < params.m {
            return Err(invalid("ef_construction must be at least M"));
        }
        let n = ds.n();
        let ml = 1.0 / libm::log(params.m as f64);
        let mut rng = NormalStream::new(params.seed, 0x686e_7377);
        let mut g = HnswGraph {
            params,
            base: Vec::with_capacity(n * (2 * params.m + 1)),
            upper: Vec::with_capacity(n),
            entry: 0,
            max_layer: 0,
        };
        let mut visited = Visited::new(n);
        for id in 0..n {
            let level = (-libm::log(rng.uniform()) * ml) as usize;
            g.insert(ds, id as u32, level, &mut visited);
        }
        Ok(g)
    }

    /// Reassembles a graph from stored adjacency lists, given as
    /// `links[v][l]` for every layer `l <= level(v)`.
    pub fn from_parts(params: HnswParams, links: Vec<Vec<Vec<u32>>>, entry: u32) -> Result<Self> {
        let n = links.len();
        if n == 0 {
            return Err(invalid("graph must have at least one vertex"));
        }
        if params.m < 2 {
            return Err(invalid("M must be at least 2"));
        }
        if entry as usize >= n || links.iter().any(|l| l.is_empty()) {
            return Err(invalid("malformed graph"));
        }
        let max_layer = links[entry as usize].len() - 1;
        if links.iter().any(|l| l.len() - 1 > max_layer) {
            return Err(invalid("entry point is not on the top layer"));
        }
        for (v, per_layer) in links.iter().enumerate() {
            if per_layer[0].len() > 2 * params.m {
                return Err(invalid("layer-0 degree exceeds 2M"));
            }
            for (l, nbrs) in per_layer.iter().enumerate() {
                for &u in nbrs {
                    if u as usize >= n || links[u as usize].len() <= l || u as usize == v {
                        return Err(invalid("edge to a vertex missing from that layer"));
                    }
                }
            }
        }
        let mut g = Self {
            params,
            base: vec![0; n * (2 * params.m + 1)],
            upper: Vec::with_capacity(n),
            entry,
            max_layer,
        };
        for (v, mut per_layer) in links.into_iter().enumerate() {
            g.set_links(v as u32, 0, &per_layer[0]);
            per_layer.remove(0);
            g.upper.push(per_layer);
        }
        Ok(g)
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn entry_point(&self) -> u32 {
        self.entry
    }

    pub fn max_layer(&self) -> usize {
        self.max_layer
    }

    /// Highest layer holding `v`.
    pub fn level(&self, v: u32) -> usize {
        self.upper[v as usize].len()
    }

    #[inline]
    pub fn neighbors(&self, v: u32, layer: usize) -> &[u32] {
        if layer == 0 {
            let at = v as usize * self.stride();
            let count = self.base[at] as usize;
            &self.base[at + 1..at + 1 + count]
        } else {
            self.upper[v as usize].get(layer - 1).map_or(&[], |l| l.as_slice())
        }
    }

    #[inline]
    fn stride(&self) -> usize {
        2 * self.params.m + 1
    }

    fn set_links(&mut self, v: u32, layer: usize, ids: &[u32]) {
        if layer == 0 {
            debug_assert!(ids.len() <= 2 * self.params.m);
            let at = v as usize * self.stride();
            self.base[at] = ids.len() as u32;
            let end = at + self.stride();
            let slots = &mut self.base[at + 1..end];
            slots[..ids.len()].copy_from_slice(ids);
            slots[ids.len()..].fill(0);
        } else {
            self.upper[v as usize][layer - 1] = ids.to_vec();
        }
    }

    /// Vertices present on `layer`.
    pub fn layer_vertices(&self, layer: usize) -> impl Iterator<Item = u32> + '_ {
        self.upper
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.len() >= layer)
            .map(|(v, _)| v as u32)
    }

    pub fn max_degree(&self, layer: usize) -> usize {
        if layer == 0 {
            2 * self.params.m
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, ds: &Dataset, id: u32, level: usize, visited: &mut Visited) {
        let stride = self.stride();
        self.base.resize(self.base.len() + stride, 0);
        self.upper.push(vec![Vec::new(); level]);
        if id == 0 {
            self.entry = 0;
            self.max_layer = level;
            return;
        }
        let q = ds.row(id as usize);
        let mut ep = Neighbor {
            dist_sq: sq_dist_fast(q, ds.row(self.entry as usize)),
            id: self.entry,
        };
        for layer in (level + 1..=self.max_layer).rev() {
            ep = self.greedy_build(ds, q, ep, layer);
        }
        let mut entries = vec![ep];
        for layer in (0..=level.min(self.max_layer)).rev() {
            let found = self.search_layer_build(ds, q, &entries, layer, visited);
            let chosen = select_heuristic(ds, &found, self.params.m);
            let ids: Vec<u32> = chosen.iter().map(|n| n.id).collect();
            self.set_links(id, layer, &ids);
            for nb in &chosen {
                self.link_back(ds, nb.id, id, nb.dist_sq, layer);
            }
            entries = found;
        }
        if level > self.max_layer {
            self.max_layer = level;
            self.entry = id;
        }
    }

    fn greedy_build(&self, ds: &Dataset, q: &[f32], mut cur: Neighbor, layer: usize) -> Neighbor {
        loop {
            let mut moved = false;
            for &nb in self.neighbors(cur.id, layer) {
                let d = sq_dist_fast(q, ds.row(nb as usize));
                if d < cur.dist_sq {
                    cur = Neighbor { dist_sq: d, id: nb };
                    moved = true;
                }
            }
            if !moved {
                return cur;
            }
        }
    }

    /// Beam search of width `ef_construction`; result ascending.
    fn search_layer_build(
        &self,
        ds: &Dataset,
        q: &[f32],
        entries: &[Neighbor],
        layer: usize,
        visited: &mut Visited,
    ) -> Vec<Neighbor> {
        visited.reset();
        let mut top = TopK::new(self.params.ef_construction);
        let mut queue: BinaryHeap<Reverse<Neighbor>> = BinaryHeap::new();
        for &e in entries {
            if visited.insert(e.id) {
                top.offer(e.dist_sq, e.id);
                queue.push(Reverse(e));
            }
        }
        while let Some(Reverse(c)) = queue.pop() {
            if c.dist_sq > top.threshold_sq() {
                break;
            }
            for &nb in self.neighbors(c.id, layer) {
                if !visited.insert(nb) {
                    continue;
                }
                let d = sq_dist_fast(q, ds.row(nb as usize));
                if top.offer(d, nb) {
                    queue.push(Reverse(Neighbor { dist_sq: d, id: nb }));
                }
            }
        }
        top.sorted()
    }

    fn link_back(&mut self, ds: &Dataset, from: u32, to: u32, dist_sq: f64, layer: usize) {
        let cap = self.max_degree(layer);
        let list = self.neighbors(from, layer);
        if list.len() < cap {
            let mut grown = list.to_vec();
            grown.push(to);
            self.set_links(from, layer, &grown);
            return;
        }
        let base = ds.row(from as usize);
        let mut cands: Vec<Neighbor> = list
            .iter()
            .map(|&u| Neighbor {
                dist_sq: sq_dist_fast(base, ds.row(u as usize)),
                id: u,
            })
            .collect();
        cands.push(Neighbor { dist_sq, id: to });
        cands.sort_unstable();
        let kept = select_heuristic(ds, &cands, cap);
        let ids: Vec<u32> = kept.iter().map(|n| n.id).collect();
        self.set_links(from, layer, &ids);
    }

    /// Query state over `store`, which must hold the vectors the graph was
    /// built from (or an isometric copy with the same ids).
    pub fn searcher<'a>(&'a self, store: &'a Dataset, cfg: &DcoConfig) -> Result<HnswSearcher<'a>> {
        if store.n() != self.len() {
            return Err(invalid("vector store size differs from the graph"));
        }
        Ok(HnswSearcher {
            graph: self,
            store,
            sampler: AdSampler::new(store.d(), cfg),
            delta_d: cfg.delta_d().min(store.d()),
            visited: Visited::new(store.n()),
            queue: BinaryHeap::new(),
            trace: None,
        })
    }

    /// One-off query; see [`HnswSearcher::search`].
    pub fn search(
        &self,
        store: &Dataset,
        query: &[f32],
        k: usize,
        n_ef: usize,
        mode: HnswMode,
        cfg: &DcoConfig,
    ) -> Result<KnnResult> {
        self.searcher(store, cfg)?.search(query, k, n_ef, mode)
    }
}

/// Keeps a candidate only if it is closer to the base point than to every
/// neighbor kept so far. `cands` must be ascending.
fn select_heuristic(ds: &Dataset, cands: &[Neighbor], m: usize) -> Vec<Neighbor> {
    if cands.len() <= m {
        return cands.to_vec();
    }
    let mut kept: Vec<Neighbor> = Vec::with_capacity(m);
    for &c in cands {
        if kept.len() >= m {
            break;
        }
        let row = ds.row(c.id as usize);
        let good = kept
            .iter()
            .all(|s| sq_dist_fast(row, ds.row(s.id as usize)) >= c.dist_sq);
        if good {
            kept.push(c);
        }
    }
    kept
}

/// Epoch-stamped visited marks, cleared in O(1).
#[derive(Clone, Debug)]
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Self {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.epoch = 1;
        }
    }

    /// Marks `v`; false if it was already marked.
    #[inline]
    fn insert(&mut self, v: u32) -> bool {
        let slot = &mut self.marks[v as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }

    fn contains(&self, v: u32) -> bool {
        self.marks[v as usize] == self.epoch
    }
}

/// Thresholds seen by one layer-0 DCO (squared).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    /// Threshold handed to the DCO.
    pub used_sq: f64,
    /// Current routing bound: max of `R` (or `R2`), `+inf` while not full.
    pub routing_sq: f64,
    /// K-th smallest exact distance known so far, `+inf` if fewer than K.
    pub kth_exact_sq: f64,
}

/// Reusable query state.
pub struct HnswSearcher<'a> {
    graph: &'a HnswGraph,
    store: &'a Dataset,
    sampler: AdSampler,
    delta_d: usize,
    visited: Visited,
    queue: BinaryHeap<Reverse<Neighbor>>,
    trace: Option<Vec<TraceEntry>>,
}

impl HnswSearcher<'_> {
    /// Records the thresholds of every layer-0 DCO of later queries.
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.as_mut().map(core::mem::take).unwrap_or_default()
    }

    /// Whether `v` was visited by the last query's layer-0 search.
    pub fn was_visited(&self, v: u32) -> bool {
        self.visited.contains(v)
    }

    #[inline]
    fn dco(&self, mode: HnswMode, id: u32, q: &[f32], r_sq: f64) -> Scan {
        let row = self.store.row(id as usize);
        match mode {
            HnswMode::Plain => full_scan(row, q, r_sq),
            HnswMode::Pd => partial_scan(row, q, r_sq, self.delta_d, 0, 0.0),
            HnswMode::Plus | HnswMode::PlusPlus => self.sampler.scan(row, q, r_sq),
        }
    }

    /// K nearest neighbors with a beam of `n_ef`.
    pub fn search(&mut self, query: &[f32], k: usize, n_ef: usize, mode: HnswMode) -> Result<KnnResult> {
        if query.len() != self.store.d() {
            return Err(Error::DimensionMismatch {
                expected: self.store.d(),
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if n_ef < k {
            return Err(invalid("N_ef must be at least K"));
        }
        let mut stats = QueryStats::default();

        // Greedy descent with a beam of one; the threshold is the best
        // distance so far.
        let g = self.graph;
        let entry_scan = full_scan(self.store.row(g.entry as usize), query, f64::INFINITY);
        stats.record(entry_scan.dims);
        let mut cur = Neighbor {
            dist_sq: entry_scan.observed_sq,
            id: g.entry,
        };
        for layer in (1..=g.max_layer).rev() {
            loop {
                let mut moved = false;
                for &nb in g.neighbors(cur.id, layer) {
                    let scan = self.dco(mode, nb, query, cur.dist_sq);
                    stats.record(scan.dims);
                    if scan.positive && scan.observed_sq < cur.dist_sq {
                        cur = Neighbor {
                            dist_sq: scan.observed_sq,
                            id: nb,
                        };
                        moved = true;
                    }
                }
                stats.hops += 1;
                if !moved {
                    break;
                }
            }
        }

        let found = match mode {
            HnswMode::PlusPlus => self.beam_decoupled(query, cur, k, n_ef, &mut stats),
            _ => self.beam(query, cur, k, n_ef, mode, &mut stats),
        };
        Ok(KnnResult {
            ids: found.iter().map(|n| n.id).collect(),
            distances: found.iter().map(|n| libm::sqrt(n.dist_sq)).collect(),
            stats,
        })
    }

    fn beam(
        &mut self,
        q: &[f32],
        start: Neighbor,
        k: usize,
        n_ef: usize,
        mode: HnswMode,
        stats: &mut QueryStats,
    ) -> Vec<Neighbor> {
        self.visited.reset();
        self.queue.clear();
        let mut results = TopK::new(n_ef);
        self.visited.insert(start.id);
        results.offer(start.dist_sq, start.id);
        self.queue.push(Reverse(start));
        while let Some(Reverse(c)) = self.queue.pop() {
            if c.dist_sq > results.threshold_sq() {
                break;
            }
            stats.hops += 1;
            for &nb in self.graph.neighbors(c.id, 0) {
                if !self.visited.insert(nb) {
                    continue;
                }
                let r_sq = results.threshold_sq();
                if let Some(trace) = self.trace.as_mut() {
                    let kth = kth_smallest(&results, k);
                    trace.push(TraceEntry {
                        used_sq: r_sq,
                        routing_sq: r_sq,
                        kth_exact_sq: kth,
                    });
                }
                let scan = self.dco(mode, nb, q, r_sq);
                stats.record(scan.dims);
                if scan.positive && results.offer(scan.observed_sq, nb) {
                    self.queue.push(Reverse(Neighbor {
                        dist_sq: scan.observed_sq,
                        id: nb,
                    }));
                }
            }
        }
        let mut out = results.sorted();
        out.truncate(k);
        out
    }

    fn beam_decoupled(
        &mut self,
        q: &[f32],
        start: Neighbor,
        k: usize,
        n_ef: usize,
        stats: &mut QueryStats,
    ) -> Vec<Neighbor> {
        self.visited.reset();
        self.queue.clear();
        let mut exact = TopK::new(k);
        let mut routing = TopK::new(n_ef);
        self.visited.insert(start.id);
        exact.offer(start.dist_sq, start.id);
        routing.offer(start.dist_sq, start.id);
        self.queue.push(Reverse(start));
        while let Some(Reverse(c)) = self.queue.pop() {
            if c.dist_sq > routing.threshold_sq() {
                break;
            }
            stats.hops += 1;
            for &nb in self.graph.neighbors(c.id, 0) {
                if !self.visited.insert(nb) {
                    continue;
                }
                let r_sq = exact.threshold_sq();
                if let Some(t) = self.trace.as_mut() {
                    t.push(TraceEntry {
                        used_sq: r_sq,
                        routing_sq: routing.threshold_sq(),
                        kth_exact_sq: r_sq,
                    });
                }
                let scan = self.sampler.scan(self.store.row(nb as usize), q, r_sq);
                stats.record(scan.dims);
                if scan.positive {
                    exact.offer(scan.observed_sq, nb);
                }
                if routing.offer(scan.observed_sq, nb) {
                    self.queue.push(Reverse(Neighbor {
                        dist_sq: scan.observed_sq,
                        id: nb,
                    }));
                }
            }
        }
        exact.sorted()
    }
}

fn kth_smallest(set: &TopK, k: usize) -> f64 {
    if set.len() < k {
        return f64::INFINITY;
    }
    let mut keys: Vec<f64> = set.iter().map(|n| n.dist_sq).collect();
    keys.sort_unstable_by(f64::total_cmp);
    keys[k - 1]
}
