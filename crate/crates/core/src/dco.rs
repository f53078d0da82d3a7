//! Distance comparison operations.
//!
//! A DCO decides whether `dist(o, q) <= r` and returns the exact distance
//! when it is. Three strategies share one accumulation kernel (squared
//! differences summed coordinate by coordinate in 64-bit, in storage
//! order), so their exact outputs agree bit for bit:
//!
//! - [`fd_scan`] reads every coordinate.
//! - [`pd_scan`] stops once the monotone partial sum exceeds `r^2`.
//! - [`ad_sampling`] works on rotated vectors and stops once the scaled
//!   partial sum `S_d * D / d` exceeds `(1 + eps0 / sqrt(d))^2 * r^2`.
//!
//! All comparisons are made on squared quantities.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Vector element accepted by the kernels.
pub trait Element: Copy {
    fn widen(self) -> f64;
}

impl Element for f32 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }
}

/// Tuning of the sequential test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcoConfig {
    epsilon0: f64,
    delta_d: usize,
}

impl DcoConfig {
    pub fn new(epsilon0: f64, delta_d: usize) -> Result<Self> {
        if epsilon0.is_nan() || epsilon0 <= 0.0 {
            return Err(invalid("epsilon0 must be positive"));
        }
        if delta_d == 0 {
            return Err(invalid("delta_d must be at least 1"));
        }
        Ok(Self { epsilon0, delta_d })
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    pub fn delta_d(&self) -> usize {
        self.delta_d
    }

    /// Same significance, different batch size.
    pub fn with_delta_d(self, delta_d: usize) -> Result<Self> {
        Self::new(self.epsilon0, delta_d)
    }
}

impl Default for DcoConfig {
    fn default() -> Self {
        Self {
            epsilon0: crate::DEFAULT_EPSILON0,
            delta_d: crate::DEFAULT_DELTA_D,
        }
    }
}

/// Result of one DCO.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcoOutcome {
    /// `dist <= r`.
    pub positive: bool,
    /// Exact distance, set iff `positive`.
    pub distance: Option<f64>,
    /// Distance estimate at termination (exact when all coordinates were read).
    pub observed: f64,
    /// Coordinates read.
    pub dims_used: usize,
}

impl DcoOutcome {
    fn from_scan(scan: Scan) -> Self {
        let observed = libm::sqrt(scan.observed_sq);
        Self {
            positive: scan.positive,
            distance: scan.positive.then_some(observed),
            observed,
            dims_used: scan.dims,
        }
    }
}

/// One DCO input: object, query and threshold distance.
#[derive(Clone, Copy, Debug)]
pub struct DcoQuery<'a, T = f32> {
    data: &'a [T],
    query: &'a [T],
    r: f64,
}

impl<'a, T: Element> DcoQuery<'a, T> {
    pub fn new(data: &'a [T], query: &'a [T], r: f64) -> Result<Self> {
        if data.len() != query.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: query.len(),
            });
        }
        if data.is_empty() {
            return Err(invalid("vectors must have at least one coordinate"));
        }
        if r.is_nan() || r < 0.0 {
            return Err(invalid("threshold must be non-negative"));
        }
        Ok(Self { data, query, r })
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    fn r_sq(&self) -> f64 {
        self.r * self.r
    }
}

/// `1 + eps0 / sqrt(d)`: how far above `r` the estimate must be to reject.
pub fn threshold_multiplier(d: usize, cfg: &DcoConfig) -> Result<f64> {
    if d == 0 {
        return Err(invalid("sampled dimension count must be at least 1"));
    }
    Ok(1.0 + cfg.epsilon0 / libm::sqrt(d as f64))
}

/// Full scan.
pub fn fd_scan<T: Element>(q: &DcoQuery<'_, T>) -> DcoOutcome {
    DcoOutcome::from_scan(full_scan(q.data, q.query, q.r_sq()))
}

/// Exact scan with early exit on the partial sum, checked every `delta_d`
/// coordinates.
pub fn pd_scan<T: Element>(q: &DcoQuery<'_, T>, delta_d: usize) -> DcoOutcome {
    let delta_d = delta_d.max(1);
    DcoOutcome::from_scan(partial_scan(q.data, q.query, q.r_sq(), delta_d, 0, 0.0))
}

/// Adaptive sampling over rotated vectors.
///
/// Both vectors must have been rotated by the same [`crate::TransformMatrix`];
/// this cannot be checked here.
pub fn ad_sampling<T: Element>(q: &DcoQuery<'_, T>, cfg: &DcoConfig) -> DcoOutcome {
    let sampler = AdSampler::new(q.dim(), cfg);
    DcoOutcome::from_scan(sampler.scan(q.data, q.query, q.r_sq()))
}

/// Raw kernel result. `observed_sq` is the squared estimate (exact squared
/// distance when `dims` equals the dimension).
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Scan {
    pub positive: bool,
    pub observed_sq: f64,
    pub dims: usize,
}

#[inline(always)]
pub(crate) fn accumulate<T: Element>(a: &[T], b: &[T], mut acc: f64) -> f64 {
    for (x, y) in a.iter().zip(b) {
        let t = x.widen() - y.widen();
        acc += t * t;
    }
    acc
}

/// Squared distance with the shared sequential kernel.
#[inline]
pub fn sq_dist<T: Element>(a: &[T], b: &[T]) -> f64 {
    accumulate(a, b, 0.0)
}

/// Squared distance with four independent accumulators. Faster, but not
/// bit-compatible with [`sq_dist`]; used by index construction only.
#[inline]
pub(crate) fn sq_dist_fast(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            let t = x[l] as f64 - y[l] as f64;
            acc[l] += t * t;
        }
    }
    let tail = accumulate(ca.remainder(), cb.remainder(), 0.0);
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn full_scan<T: Element>(a: &[T], b: &[T], r_sq: f64) -> Scan {
    let s = accumulate(a, b, 0.0);
    Scan {
        positive: s <= r_sq,
        observed_sq: s,
        dims: a.len(),
    }
}

/// Partial-distance scan resuming at coordinate `start` with running sum
/// `acc`. `a` and `b` hold coordinates `start..dim`. Tests happen at every
/// multiple of `delta_d`.
#[inline]
pub(crate) fn partial_scan<T: Element>(
    a: &[T],
    b: &[T],
    r_sq: f64,
    delta_d: usize,
    start: usize,
    mut acc: f64,
) -> Scan {
    let dim = start + a.len();
    let mut d = start;
    let mut bound = (start / delta_d + 1) * delta_d;
    while d < dim {
        let next = bound.min(dim);
        bound += delta_d;
        acc = accumulate(&a[d - start..next - start], &b[d - start..next - start], acc);
        d = next;
        if d < dim && acc > r_sq {
            return Scan {
                positive: false,
                observed_sq: acc,
                dims: d,
            };
        }
    }
    Scan {
        positive: acc <= r_sq,
        observed_sq: acc,
        dims: dim,
    }
}

/// Adaptive sampler with the per-checkpoint multipliers precomputed for one
/// dimension and configuration.
#[derive(Clone, Debug)]
pub struct AdSampler {
    dim: usize,
    delta_d: usize,
    /// `(1 + eps0 / sqrt(d))^2` at checkpoint `d = (i + 1) * delta_d`.
    mult_sq: Vec<f64>,
    /// `dim / d` at the same checkpoints.
    ratio: Vec<f64>,
}

impl AdSampler {
    pub fn new(dim: usize, cfg: &DcoConfig) -> Self {
        let delta_d = cfg.delta_d.min(dim.max(1));
        let checkpoints = dim.div_ceil(delta_d);
        let mult_sq = (1..=checkpoints)
            .map(|i| {
                let d = (i * delta_d).min(dim);
                let m = 1.0 + cfg.epsilon0 / libm::sqrt(d as f64);
                m * m
            })
            .collect();
        let ratio = (1..=checkpoints)
            .map(|i| dim as f64 / (i * delta_d).min(dim) as f64)
            .collect();
        Self {
            dim,
            delta_d,
            mult_sq,
            ratio,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta_d(&self) -> usize {
        self.delta_d
    }

    #[inline]
    pub(crate) fn scan<T: Element>(&self, a: &[T], b: &[T], r_sq: f64) -> Scan {
        self.resume(a, b, r_sq, 0, 0.0)
    }

    /// Continues a scan from coordinate `start` with running sum `acc`;
    /// `a` and `b` hold coordinates `start..dim`.
    ///
    /// If `start` is itself a checkpoint, its test is assumed to have been
    /// passed already by the caller.
    #[inline]
    pub(crate) fn resume<T: Element>(&self, a: &[T], b: &[T], r_sq: f64, start: usize, mut acc: f64) -> Scan {
        let dim = self.dim;
        debug_assert_eq!(start + a.len(), dim);
        let mut d = start;
        let mut slot = start / self.delta_d;
        while d < dim {
            let next = ((slot + 1) * self.delta_d).min(dim);
            acc = accumulate(&a[d - start..next - start], &b[d - start..next - start], acc);
            d = next;
            if d < dim {
                let observed_sq = acc * self.ratio[slot];
                if observed_sq > self.mult_sq[slot] * r_sq {
                    return Scan {
                        positive: false,
                        observed_sq,
                        dims: d,
                    };
                }
            }
            slot += 1;
        }
        Scan {
            positive: acc <= r_sq,
            observed_sq: acc,
            dims: dim,
        }
    }

    /// Whether `d` is a checkpoint where a test happens.
    #[inline]
    pub(crate) fn is_checkpoint(&self, d: usize) -> bool {
        d > 0 && d < self.dim && d.is_multiple_of(self.delta_d)
    }

    /// Checkpoint index of `d`, when `d` is one.
    pub(crate) fn slot_of(&self, d: usize) -> Option<usize> {
        self.is_checkpoint(d).then(|| d / self.delta_d - 1)
    }

    /// Runs the test at checkpoint `slot` (coordinate `d`, below the
    /// dimension) for a running sum computed elsewhere. Returns the rejecting
    /// scan, or `None` to continue.
    #[inline]
    pub(crate) fn test_slot(&self, slot: usize, d: usize, acc: f64, r_sq: f64) -> Option<Scan> {
        let observed_sq = acc * self.ratio[slot];
        (observed_sq > self.mult_sq[slot] * r_sq).then_some(Scan {
            positive: false,
            observed_sq,
            dims: d,
        })
    }
}

/// Normalized vectors and threshold produced by a metric reduction.
#[derive(Clone, Debug, PartialEq)]
pub enum Reduced {
    /// Run a Euclidean DCO on these inputs.
    Query { data: Vec<f64>, query: Vec<f64>, r: f64 },
    /// The predicate is false whatever the vectors are.
    AlwaysNegative,
}

impl Reduced {
    pub fn as_query(&self) -> Option<DcoQuery<'_, f64>> {
        match self {
            Reduced::Query { data, query, r } => DcoQuery::new(data, query, *r).ok(),
            Reduced::AlwaysNegative => None,
        }
    }

    /// Evaluates the reduced predicate with a full scan.
    pub fn holds(&self) -> bool {
        self.as_query().is_some_and(|q| fd_scan(&q).positive)
    }
}

fn normalized(v: &[f32]) -> Result<Vec<f64>> {
    let norm = libm::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum::<f64>());
    if norm == 0.0 {
        return Err(invalid("zero-norm vector"));
    }
    Ok(v.iter().map(|&x| x as f64 / norm).collect())
}

fn norm(v: &[f32]) -> f64 {
    libm::sqrt(v.iter().map(|&x| x as f64 * x as f64).sum::<f64>())
}

/// Reduces `<o, q> >= r` to the Euclidean DCO
/// `|o/|o| - q/|q|| <= sqrt(2 - 2 r / (|o| |q|))`.
pub fn reduce_inner_product(o: &[f32], q: &[f32], r: f64) -> Result<Reduced> {
    if o.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: o.len(),
            got: q.len(),
        });
    }
    let (no, nq) = (norm(o), norm(q));
    if no == 0.0 || nq == 0.0 {
        return Err(invalid("zero-norm vector"));
    }
    let t_sq = 2.0 - 2.0 * r / (no * nq);
    if t_sq < 0.0 {
        return Ok(Reduced::AlwaysNegative);
    }
    Ok(Reduced::Query {
        data: normalized(o)?,
        query: normalized(q)?,
        r: libm::sqrt(t_sq),
    })
}

/// Unit-normalizes both vectors; Euclidean order over the outputs is the
/// reverse of cosine-similarity order over the inputs.
pub fn reduce_cosine(o: &[f32], q: &[f32]) -> Result<(Vec<f64>, Vec<f64>)> {
    if o.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: o.len(),
            got: q.len(),
        });
    }
    Ok((normalized(o)?, normalized(q)?))
}
