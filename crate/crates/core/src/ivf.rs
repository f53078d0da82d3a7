//! Inverted-file index over k-means buckets.
//!
//! Candidates are the members of the `n_probe` buckets whose centroids are
//! closest to the query, visited bucket by bucket in ascending centroid
//! distance and in storage order inside a bucket. Every candidate goes
//! through one DCO against the current K-th smallest distance.
//!
//! With [`Layout::Split`] the index also keeps two arrays per bucket: `a1`
//! holds the first `d1` coordinates of every member back to back, `a2`
//! the remaining ones. The split modes read `a1` for all candidates
//! before touching `a2`; the decisions are the same as in the contiguous
//! modes because the partial sums are identical.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::dco::{accumulate, full_scan, partial_scan, sq_dist, sq_dist_fast, AdSampler, DcoConfig, Scan};
use crate::error::{invalid, Error, Result};
use crate::heap::TopK;
use crate::kmeans::kmeans;
use crate::{KnnResult, QueryStats};

/// Lloyd rounds used by [`IvfIndex::build`].
/// Rows processed together in the first pass over the split layout.
const LANES: usize = 4;

pub const KMEANS_ITERS: usize = 20;

/// Storage layout of bucket members.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Contiguous,
    /// Contiguous rows plus the two-array copy split after `d1` coordinates.
    Split {
        d1: usize,
    },
}

/// DCO strategy for a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IvfMode {
    /// Full scan (IVF).
    Fd,
    /// Partial-distance scan (IVF*).
    Pd,
    /// Adaptive sampling (IVF+).
    Ad,
    /// Adaptive sampling over the split layout (IVF++).
    AdSplit,
    /// Partial-distance scan over the split layout (IVF**).
    PdSplit,
}

impl IvfMode {
    pub const ALL: [IvfMode; 5] = [
        IvfMode::Fd,
        IvfMode::Pd,
        IvfMode::PdSplit,
        IvfMode::Ad,
        IvfMode::AdSplit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IvfMode::Fd => "IVF",
            IvfMode::Pd => "IVF*",
            IvfMode::PdSplit => "IVF**",
            IvfMode::Ad => "IVF+",
            IvfMode::AdSplit => "IVF++",
        }
    }

    /// Adaptive modes expect rotated vectors.
    pub fn is_adaptive(self) -> bool {
        matches!(self, IvfMode::Ad | IvfMode::AdSplit)
    }

    pub fn is_split(self) -> bool {
        matches!(self, IvfMode::AdSplit | IvfMode::PdSplit)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct SplitStore {
    d1: usize,
    a1: Vec<f32>,
    a2: Vec<f32>,
}

impl SplitStore {
    fn from_rows(vectors: &[f32], dim: usize, d1: usize) -> Self {
        let n = vectors.len() / dim;
        let mut a1 = Vec::with_capacity(n * d1);
        let mut a2 = Vec::with_capacity(n * (dim - d1));
        for row in vectors.chunks_exact(dim) {
            a1.extend_from_slice(&row[..d1]);
            a2.extend_from_slice(&row[d1..]);
        }
        Self { d1, a1, a2 }
    }
}

/// K-means inverted file.
#[derive(Clone, Debug, PartialEq)]
pub struct IvfIndex {
    dim: usize,
    centroids: Vec<f32>,
    /// Bucket `c` owns positions `offsets[c]..offsets[c + 1]`.
    offsets: Vec<usize>,
    /// Vector id at each position.
    ids: Vec<u32>,
    /// Rows in position order.
    vectors: Vec<f32>,
    split: Option<SplitStore>,
    seed: u64,
}

impl IvfIndex {
    /// Clusters `ds` and fills the buckets.
    ///
    /// Every vector lands in the bucket of its nearest stored centroid (ties
    /// to the lowest cluster index), computed with the exact kernel after
    /// clustering finishes.
    pub fn build(ds: &Dataset, k_clusters: usize, seed: u64, layout: Layout) -> Result<Self> {
        if let Layout::Split { d1 } = layout {
            if d1 == 0 || d1 >= ds.d() {
                return Err(invalid("split point d1 must lie in [1, D)"));
            }
        }
        let km = kmeans(ds, k_clusters, KMEANS_ITERS, seed)?;
        let assignments: Vec<u32> = ds
            .rows()
            .map(|x| nearest_exact(&km.centroids, ds.d(), x) as u32)
            .collect();
        Self::from_parts(ds, km.centroids, &assignments, seed, layout)
    }

    /// Assembles an index from given centroids and per-vector assignments.
    pub fn from_parts(
        ds: &Dataset,
        centroids: Vec<f32>,
        assignments: &[u32],
        seed: u64,
        layout: Layout,
    ) -> Result<Self> {
        let dim = ds.d();
        if centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(invalid("centroid table is not k x D"));
        }
        let k = centroids.len() / dim;
        if assignments.len() != ds.n() || assignments.iter().any(|&a| a as usize >= k) {
            return Err(invalid("assignments do not match the dataset and centroids"));
        }
        let mut counts = vec![0usize; k + 1];
        for &a in assignments {
            counts[a as usize + 1] += 1;
        }
        for c in 0..k {
            counts[c + 1] += counts[c];
        }
        let offsets = counts;
        let mut cursor = offsets.clone();
        let mut ids = vec![0u32; ds.n()];
        for (i, &a) in assignments.iter().enumerate() {
            ids[cursor[a as usize]] = i as u32;
            cursor[a as usize] += 1;
        }
        let mut vectors = Vec::with_capacity(ds.n() * dim);
        for &id in &ids {
            vectors.extend_from_slice(ds.row(id as usize));
        }
        let split = match layout {
            Layout::Contiguous => None,
            Layout::Split { d1 } => {
                if d1 == 0 || d1 >= dim {
                    return Err(invalid("split point d1 must lie in [1, D)"));
                }
                Some(SplitStore::from_rows(&vectors, dim, d1))
            }
        };
        Ok(Self {
            dim,
            centroids,
            offsets,
            ids,
            vectors,
            split,
            seed,
        })
    }

    /// Same buckets over a different copy of the vectors (e.g. the
    /// unrotated originals for the baseline modes), with matching centroids.
    pub fn rebase(&self, ds: &Dataset, centroids: Vec<f32>) -> Result<Self> {
        if ds.n() != self.len() {
            return Err(invalid("rebased dataset must have the same size"));
        }
        if centroids.len() != self.k_clusters() * ds.d() {
            return Err(invalid("centroid table is not k x D"));
        }
        let mut assignments = vec![0u32; self.len()];
        for c in 0..self.k_clusters() {
            for &id in self.bucket(c) {
                assignments[id as usize] = c as u32;
            }
        }
        Self::from_parts(ds, centroids, &assignments, self.seed, self.layout())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn k_clusters(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layout(&self) -> Layout {
        match &self.split {
            None => Layout::Contiguous,
            Some(s) => Layout::Split { d1: s.d1 },
        }
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Member ids of bucket `c`, in storage order.
    pub fn bucket(&self, c: usize) -> &[u32] {
        &self.ids[self.offsets[c]..self.offsets[c + 1]]
    }

    /// Row at storage position `pos`.
    pub fn stored_row(&self, pos: usize) -> &[f32] {
        &self.vectors[pos * self.dim..(pos + 1) * self.dim]
    }

    /// The vector with id `id` (linear lookup of its position).
    pub fn vector(&self, id: u32) -> Option<&[f32]> {
        self.ids.iter().position(|&x| x == id).map(|p| self.stored_row(p))
    }

    /// Position-ordered split arrays `(d1, a1, a2)`, when present.
    pub fn split_arrays(&self) -> Option<(usize, &[f32], &[f32])> {
        self.split.as_ref().map(|s| (s.d1, s.a1.as_slice(), s.a2.as_slice()))
    }

    /// Re-interleaves the split arrays into full rows.
    pub fn interleave_split(&self) -> Option<Vec<f32>> {
        let s = self.split.as_ref()?;
        let d2 = self.dim - s.d1;
        let mut out = Vec::with_capacity(self.vectors.len());
        for (p1, p2) in s.a1.chunks_exact(s.d1).zip(s.a2.chunks_exact(d2)) {
            out.extend_from_slice(p1);
            out.extend_from_slice(p2);
        }
        Some(out)
    }

    /// Reusable query state for one configuration.
    pub fn searcher(&self, cfg: &DcoConfig) -> IvfSearcher<'_> {
        IvfSearcher {
            index: self,
            sampler: AdSampler::new(self.dim, cfg),
            delta_d: cfg.delta_d().min(self.dim),
            probes: Vec::with_capacity(self.k_clusters()),
            partial: Vec::new(),
            breaks: Vec::new(),
            tests: Vec::new(),
            top: TopK::new(1),
        }
    }

    /// One-off query; see [`IvfSearcher::search`].
    pub fn search(&self, query: &[f32], k: usize, n_probe: usize, mode: IvfMode, cfg: &DcoConfig) -> Result<KnnResult> {
        self.searcher(cfg).search(query, k, n_probe, mode)
    }
}

/// Nearest centroid under the exact kernel; ties to the lowest index.
pub fn nearest_exact(centroids: &[f32], dim: usize, x: &[f32]) -> usize {
    let mut best = (0usize, f64::INFINITY);
    for (c, row) in centroids.chunks_exact(dim).enumerate() {
        let dist = sq_dist(row, x);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best.0
}

/// Per-query scratch bound to one index and configuration.
pub struct IvfSearcher<'a> {
    index: &'a IvfIndex,
    sampler: AdSampler,
    delta_d: usize,
    probes: Vec<(f64, u32)>,
    /// Split modes: running sums at each break point, candidate-major.
    partial: Vec<f64>,
    breaks: Vec<usize>,
    /// Per break: the checkpoint slot tested there, if any.
    tests: Vec<Option<usize>>,
    top: TopK,
}

impl IvfSearcher<'_> {
    /// K nearest neighbors among the members of the `n_probe` closest
    /// buckets. Adaptive modes need a rotated query over a rotated index.
    pub fn search(&mut self, query: &[f32], k: usize, n_probe: usize, mode: IvfMode) -> Result<KnnResult> {
        let idx = self.index;
        if query.len() != idx.dim {
            return Err(Error::DimensionMismatch {
                expected: idx.dim,
                got: query.len(),
            });
        }
        if k == 0 {
            return Err(invalid("K must be at least 1"));
        }
        if n_probe == 0 || n_probe > idx.k_clusters() {
            return Err(invalid("n_probe must lie in [1, k_clusters]"));
        }
        if mode.is_split() && idx.split.is_none() {
            return Err(invalid("split modes need an index built with the split layout"));
        }

        self.probes.clear();
        self.probes.extend(
            idx.centroids
                .chunks_exact(idx.dim)
                .enumerate()
                .map(|(c, row)| (sq_dist_fast(row, query), c as u32)),
        );
        let by_key = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if n_probe < self.probes.len() {
            self.probes.select_nth_unstable_by(n_probe - 1, by_key);
            self.probes.truncate(n_probe);
        }
        self.probes.sort_unstable_by(by_key);

        self.top = TopK::new(k);
        let mut stats = QueryStats::default();
        if mode.is_split() {
            self.scan_split(query, mode, &mut stats);
        } else {
            for pi in 0..self.probes.len() {
                let c = self.probes[pi].1 as usize;
                for pos in idx.offsets[c]..idx.offsets[c + 1] {
                    let row = idx.stored_row(pos);
                    let r_sq = self.top.threshold_sq();
                    let scan = match mode {
                        IvfMode::Fd => full_scan(row, query, r_sq),
                        IvfMode::Pd => partial_scan(row, query, r_sq, self.delta_d, 0, 0.0),
                        _ => self.sampler.scan(row, query, r_sq),
                    };
                    stats.record(scan.dims);
                    if scan.positive {
                        self.top.offer(scan.observed_sq, idx.ids[pos]);
                    }
                }
            }
        }

        let sorted = self.top.sorted();
        Ok(KnnResult {
            ids: sorted.iter().map(|n| n.id).collect(),
            distances: sorted.iter().map(|n| libm::sqrt(n.dist_sq)).collect(),
            stats,
        })
    }

    fn scan_split(&mut self, query: &[f32], mode: IvfMode, stats: &mut QueryStats) {
        let idx = self.index;
        let split = idx.split.as_ref().expect("checked by caller");
        let (dim, d1) = (idx.dim, split.d1);
        let d2 = dim - d1;
        let step = match mode {
            IvfMode::AdSplit => self.sampler.delta_d(),
            _ => self.delta_d,
        };

        // Test points that fall inside the first array, then d1 itself.
        self.breaks.clear();
        self.breaks
            .extend((1..).map(|i| i * step).take_while(|&b| b <= d1 && b < dim));
        if self.breaks.last() != Some(&d1) {
            self.breaks.push(d1);
        }
        let nb = self.breaks.len();
        self.tests.clear();
        for &b in &self.breaks {
            self.tests.push(match mode {
                IvfMode::AdSplit => self.sampler.slot_of(b),
                _ => (b % step == 0 && b < dim).then_some(0),
            });
        }

        // Pass one: first d1 coordinates of every candidate. Four rows are
        // interleaved so their accumulation chains overlap; each row still
        // sums its coordinates in order.
        self.partial.clear();
        for &(_, c) in &self.probes {
            let c = c as usize;
            let (lo, hi) = (idx.offsets[c], idx.offsets[c + 1]);
            let mut pos = lo;
            while pos + LANES <= hi {
                let rows = &split.a1[pos * d1..(pos + LANES) * d1];
                let base = self.partial.len();
                self.partial.resize(base + LANES * nb, 0.0);
                let mut acc = [0.0f64; LANES];
                let mut from = 0;
                for (bi, &b) in self.breaks.iter().enumerate() {
                    for j in from..b {
                        let qj = query[j] as f64;
                        for (l, a) in acc.iter_mut().enumerate() {
                            let t = rows[l * d1 + j] as f64 - qj;
                            *a += t * t;
                        }
                    }
                    for (l, a) in acc.iter().enumerate() {
                        self.partial[base + l * nb + bi] = *a;
                    }
                    from = b;
                }
                pos += LANES;
            }
            for pos in pos..hi {
                let head = &split.a1[pos * d1..(pos + 1) * d1];
                let mut acc = 0.0;
                let mut from = 0;
                for &b in &self.breaks {
                    acc = accumulate(&head[from..b], &query[from..b], acc);
                    self.partial.push(acc);
                    from = b;
                }
            }
        }

        // Pass two: decide each candidate, reading the rest only if needed.
        let mut cand = 0;
        for pi in 0..self.probes.len() {
            let c = self.probes[pi].1 as usize;
            for pos in idx.offsets[c]..idx.offsets[c + 1] {
                let sums = &self.partial[cand * nb..(cand + 1) * nb];
                cand += 1;
                let r_sq = self.top.threshold_sq();
                let mut verdict: Option<Scan> = None;
                for ((&b, &test), &acc) in self.breaks.iter().zip(&self.tests).zip(sums) {
                    let Some(slot) = test else { continue };
                    verdict = match mode {
                        IvfMode::AdSplit => self.sampler.test_slot(slot, b, acc, r_sq),
                        _ => (acc > r_sq).then_some(Scan {
                            positive: false,
                            observed_sq: acc,
                            dims: b,
                        }),
                    };
                    if verdict.is_some() {
                        break;
                    }
                }
                let scan = match verdict {
                    Some(v) => v,
                    None => {
                        let tail = &split.a2[pos * d2..(pos + 1) * d2];
                        let acc = sums[nb - 1];
                        match mode {
                            IvfMode::AdSplit => self.sampler.resume(tail, &query[d1..], r_sq, d1, acc),
                            _ => partial_scan(tail, &query[d1..], r_sq, step, d1, acc),
                        }
                    }
                };
                stats.record(scan.dims);
                if scan.positive {
                    self.top.offer(scan.observed_sq, idx.ids[pos]);
                }
            }
        }
    }
}
