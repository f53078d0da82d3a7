//! Exact oracle and accuracy metrics.

use alloc::vec::Vec;

use crate::dataset::{Dataset, GroundTruth};
use crate::dco::{sq_dist, AdSampler, DcoConfig};
use crate::error::{invalid, Result};

/// The `k` nearest rows of `ds` to `q` as `(distance, id)`, ascending,
/// ties by ascending id.
pub fn exact_knn(ds: &Dataset, q: &[f32], k: usize) -> Vec<(f64, u32)> {
    let mut all: Vec<(f64, u32)> = ds.rows().enumerate().map(|(i, x)| (sq_dist(x, q), i as u32)).collect();
    let by_key = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    let k = k.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k, by_key);
        all.truncate(k);
    }
    all.sort_unstable_by(by_key);
    all.into_iter().map(|(d, i)| (libm::sqrt(d), i)).collect()
}

/// Exact K nearest neighbors of every query by linear scan.
pub fn brute_force_knn(ds: &Dataset, queries: &Dataset, k: usize) -> Result<GroundTruth> {
    queries.check_dim(ds.d())?;
    if k == 0 || k > ds.n() {
        return Err(invalid("K must lie in [1, n]"));
    }
    let mut ids = Vec::with_capacity(queries.n() * k);
    for q in queries.rows() {
        ids.extend(exact_knn(ds, q, k).into_iter().map(|(_, i)| i));
    }
    GroundTruth::new(k, ids)
}

/// Exact distances from `q` to the given ids.
pub fn distances_to(ds: &Dataset, q: &[f32], ids: &[u32]) -> Vec<f64> {
    ids.iter()
        .map(|&i| libm::sqrt(sq_dist(ds.row(i as usize), q)))
        .collect()
}

/// Fraction of the first `k` ground-truth ids present in `result`.
pub fn recall(result: &[u32], gt: &[u32], k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let truth = &gt[..k.min(gt.len())];
    let hits = result.iter().take(k).filter(|id| truth.contains(id)).count();
    hits as f64 / k as f64
}

/// Mean of `result[i] / gt[i]` over the first `k` slots.
///
/// A slot with `gt[i] == 0` counts as 1 when `result[i]` is also 0;
/// otherwise the ratio is undefined and `None` is returned so the caller
/// can drop (and report) the query. Missing result slots also give `None`.
pub fn avg_distance_ratio(result: &[f64], gt: &[f64], k: usize) -> Option<f64> {
    if k == 0 || result.len() < k || gt.len() < k {
        return None;
    }
    let mut total = 0.0;
    for (&r, &g) in result.iter().zip(gt).take(k) {
        if g == 0.0 {
            if r == 0.0 {
                total += 1.0;
            } else {
                return None;
            }
        } else {
            total += r / g;
        }
    }
    Some(total / k as f64)
}

/// One row of the fixed-threshold experiment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryRow {
    pub epsilon0: f64,
    /// Positive objects rejected / positive objects.
    pub failure_rate: f64,
    /// Mean coordinates read per DCO, over all objects.
    pub avg_dims: f64,
    pub positives: u64,
    pub failures: u64,
}

/// Runs independent adaptive DCOs of every object against a fixed
/// threshold: the exact distance of each query's K-th nearest neighbor.
/// One coordinate is sampled per test. Both sets must be rotated by the
/// same matrix.
pub fn verify_theory(ds: &Dataset, queries: &Dataset, k: usize, grid: &[f64]) -> Result<Vec<TheoryRow>> {
    queries.check_dim(ds.d())?;
    if k == 0 || k > ds.n() {
        return Err(invalid("K must lie in [1, n]"));
    }
    let samplers = grid
        .iter()
        .map(|&e| Ok(AdSampler::new(ds.d(), &DcoConfig::new(e, 1)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<TheoryRow> = grid
        .iter()
        .map(|&epsilon0| TheoryRow {
            epsilon0,
            failure_rate: 0.0,
            avg_dims: 0.0,
            positives: 0,
            failures: 0,
        })
        .collect();
    let mut dims = alloc::vec![0u64; grid.len()];
    let mut exact: Vec<f64> = Vec::with_capacity(ds.n());
    for q in queries.rows() {
        exact.clear();
        exact.extend(ds.rows().map(|x| sq_dist(x, q)));
        let mut sorted = exact.clone();
        sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
        let r_sq = sorted[k - 1];
        for (i, x) in ds.rows().enumerate() {
            let positive = exact[i] <= r_sq;
            for (g, sampler) in samplers.iter().enumerate() {
                let scan = sampler.scan(x, q, r_sq);
                dims[g] += scan.dims as u64;
                if positive {
                    rows[g].positives += 1;
                    if !scan.positive {
                        rows[g].failures += 1;
                    }
                }
            }
        }
    }
    let dcos = (ds.n() * queries.n()) as f64;
    for (row, &d) in rows.iter_mut().zip(&dims) {
        row.failure_rate = row.failures as f64 / row.positives.max(1) as f64;
        row.avg_dims = d as f64 / dcos;
    }
    Ok(rows)
}
