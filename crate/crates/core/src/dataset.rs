//! In-memory vector sets, ground truth lists and synthetic blob data.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::rng::NormalStream;

/// `n` vectors of dimension `d`, stored row-major as 32-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    data: Vec<f32>,
}

impl Dataset {
    /// Wraps row-major `data`; `n` is `data.len() / d`.
    pub fn new(d: usize, data: Vec<f32>) -> Result<Self> {
        if d == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if data.is_empty() {
            return Err(invalid("dataset must hold at least one vector"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(invalid("data length is not a multiple of the dimension"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("dataset contains a non-finite value"));
        }
        Ok(Self {
            n: data.len() / d,
            d,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// New dataset made of the given rows, in order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            if i >= self.n {
                return Err(invalid("row index out of range"));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(self.d, data)
    }

    pub(crate) fn check_dim(&self, d: usize) -> Result<()> {
        if self.d != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: self.d,
            });
        }
        Ok(())
    }
}

/// Exact nearest neighbor ids per query, ascending by distance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    k: usize,
    ids: Vec<u32>,
}

impl GroundTruth {
    pub fn new(k: usize, ids: Vec<u32>) -> Result<Self> {
        if k == 0 {
            return Err(invalid("ground truth lists must be non-empty"));
        }
        if ids.is_empty() || !ids.len().is_multiple_of(k) {
            return Err(invalid("ground truth length is not a positive multiple of k"));
        }
        Ok(Self { k, ids })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_queries(&self) -> usize {
        self.ids.len() / self.k
    }

    pub fn row(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.ids.chunks_exact(self.k)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.ids
    }

    /// Checks every id against a base set of `n` vectors.
    pub fn check_ids(&self, n: usize) -> Result<()> {
        if self.ids.iter().any(|&id| id as usize >= n) {
            return Err(invalid("ground truth id out of range"));
        }
        Ok(())
    }
}

/// Parameters of a Gaussian blob mixture.
///
/// Every point is a uniformly chosen blob center plus Gaussian noise.
/// The noise has standard deviations `spread * decay^i`, `i = 0..d`,
/// assigned to the coordinates in a seeded random order. `decay = 1.0`
/// gives isotropic blobs; smaller values concentrate the variance in a few
/// coordinates (lower intrinsic dimension, closer to real descriptor data)
/// without favouring any particular coordinate prefix. Centers are drawn
/// from `N(0, center_scale^2 * spread^2)` per coordinate and re-drawn until
/// every pair is at least `10 * spread` apart.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub n_blobs: usize,
    pub spread: f64,
    pub seed: u64,
    pub decay: f64,
    pub center_scale: f64,
}

/// Output of [`SynthSpec::generate`].
#[derive(Clone, Debug)]
pub struct SynthData {
    pub base: Dataset,
    pub queries: Option<Dataset>,
    /// Generating centers, `n_blobs x d` row-major.
    pub centers: Vec<f64>,
    /// Blob of every base vector.
    pub labels: Vec<usize>,
}

const MIN_CENTER_GAP: f64 = 10.0;

impl SynthSpec {
    pub fn new(n: usize, d: usize, n_blobs: usize, spread: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            n_blobs,
            spread,
            seed,
            decay: 1.0,
            center_scale: 2.0,
        }
    }

    pub fn decay(mut self, decay: f64) -> Self {
        self.decay = decay;
        self
    }

    pub fn center_scale(mut self, scale: f64) -> Self {
        self.center_scale = scale;
        self
    }

    /// Base set only.
    pub fn generate(&self) -> Result<SynthData> {
        self.generate_with_queries(0)
    }

    /// Base set plus `n_queries` extra points from the same mixture.
    pub fn generate_with_queries(&self, n_queries: usize) -> Result<SynthData> {
        if self.n == 0 || self.d == 0 || self.n_blobs == 0 {
            return Err(invalid("n, d and n_blobs must be at least 1"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(invalid("spread must be finite and non-negative"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(invalid("decay must lie in (0, 1]"));
        }
        let centers = self.centers();
        let mut scales: Vec<f64> = (0..self.d)
            .map(|j| self.spread * libm::pow(self.decay, j as f64))
            .collect();
        let mut order = NormalStream::new(self.seed, 2);
        for i in (1..self.d).rev() {
            scales.swap(i, order.below(i + 1));
        }
        let mut rng = NormalStream::new(self.seed, 1);
        let mut draw = |count: usize, labels: &mut Vec<usize>| {
            let mut data = Vec::with_capacity(count * self.d);
            for _ in 0..count {
                let b = rng.below(self.n_blobs);
                labels.push(b);
                let c = &centers[b * self.d..(b + 1) * self.d];
                for (cj, sj) in c.iter().zip(&scales) {
                    data.push((cj + sj * rng.normal()) as f32);
                }
            }
            data
        };
        let mut labels = Vec::with_capacity(self.n);
        let base = Dataset::new(self.d, draw(self.n, &mut labels))?;
        let queries = if n_queries > 0 {
            let mut scratch = Vec::new();
            Some(Dataset::new(self.d, draw(n_queries, &mut scratch))?)
        } else {
            None
        };
        Ok(SynthData {
            base,
            queries,
            centers,
            labels,
        })
    }

    fn centers(&self) -> Vec<f64> {
        let d = self.d;
        let mut rng = NormalStream::new(self.seed, 0);
        let min_gap_sq = (MIN_CENTER_GAP * self.spread) * (MIN_CENTER_GAP * self.spread);
        let mut scale = self.center_scale * self.spread;
        if scale == 0.0 {
            scale = 1.0;
        }
        let mut centers: Vec<f64> = Vec::with_capacity(self.n_blobs * d);
        let mut attempts = 0usize;
        while centers.len() < self.n_blobs * d {
            let cand: Vec<f64> = (0..d).map(|_| scale * rng.normal()).collect();
            let ok = centers
                .chunks_exact(d)
                .all(|c| c.iter().zip(&cand).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() >= min_gap_sq);
            if ok {
                centers.extend_from_slice(&cand);
                attempts = 0;
            } else {
                attempts += 1;
                // Low dimension with many blobs: widen the box until they fit.
                if attempts == 64 {
                    scale *= 1.5;
                    attempts = 0;
                }
            }
        }
        centers
    }
}

/// Isotropic blob mixture; see [`SynthSpec`].
pub fn synth_dataset(n: usize, d: usize, n_blobs: usize, spread: f64, seed: u64) -> Result<Dataset> {
    Ok(SynthSpec::new(n, d, n_blobs, spread, seed).generate()?.base)
}
