//! Lloyd's k-means with k-means++ seeding.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::dco::sq_dist_fast;
use crate::error::{invalid, Result};
use crate::rng::NormalStream;

#[derive(Clone, Debug)]
pub struct KMeans {
    /// `k x d`, row-major.
    pub centroids: Vec<f32>,
    pub dim: usize,
    pub assignments: Vec<u32>,
    /// Sum of squared distances to the assigned centroid, after each
    /// assignment step.
    pub objective: Vec<f64>,
}

impl KMeans {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// Index of the nearest row of `centroids`; ties go to the lowest index.
pub fn nearest(centroids: &[f32], d: usize, x: &[f32]) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (c, row) in centroids.chunks_exact(d).enumerate() {
        let dist = sq_dist_fast(row, x);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

/// Clusters `ds` into `k` groups.
///
/// Stops after `max_iters` Lloyd rounds or once the objective changes by
/// less than 1e-4 relative. A cluster that ends up empty is re-seeded at
/// the point currently farthest from its own centroid.
pub fn kmeans(ds: &Dataset, k: usize, max_iters: usize, seed: u64) -> Result<KMeans> {
    let (n, d) = (ds.n(), ds.d());
    if k == 0 || k > n {
        return Err(invalid("k must lie in [1, n]"));
    }
    let mut centroids = seed_plus_plus(ds, k, seed);
    let mut assignments = vec![0u32; n];
    let mut dists = vec![0.0f64; n];
    let mut objective = Vec::new();
    let mut sums = vec![0.0f64; k * d];
    let mut counts = vec![0usize; k];

    for iter in 0..max_iters.max(1) {
        let mut total = 0.0;
        for (i, x) in ds.rows().enumerate() {
            let (c, dist) = nearest(&centroids, d, x);
            assignments[i] = c as u32;
            dists[i] = dist;
            total += dist;
        }
        objective.push(total);
        if iter > 0 {
            let prev = objective[iter - 1];
            if prev == 0.0 || (prev - total).abs() / prev < 1e-4 {
                break;
            }
        }
        if iter + 1 == max_iters.max(1) {
            break;
        }

        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (x, &a) in ds.rows().zip(&assignments) {
            let a = a as usize;
            counts[a] += 1;
            for (s, &v) in sums[a * d..(a + 1) * d].iter_mut().zip(x) {
                *s += v as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..(c + 1) * d]) {
                    *dst = (s * inv) as f32;
                }
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                let (far, _) = dists.iter().enumerate().fold(
                    (0usize, -1.0f64),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                );
                centroids[c * d..(c + 1) * d].copy_from_slice(ds.row(far));
                dists[far] = 0.0;
                let old = assignments[far] as usize;
                counts[old] -= 1;
                counts[c] = 1;
                assignments[far] = c as u32;
            }
        }
    }

    Ok(KMeans {
        centroids,
        dim: d,
        assignments,
        objective,
    })
}

fn seed_plus_plus(ds: &Dataset, k: usize, seed: u64) -> Vec<f32> {
    let (n, d) = (ds.n(), ds.d());
    let mut rng = NormalStream::new(seed, 0x6b6d);
    let mut centroids = Vec::with_capacity(k * d);
    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    centroids.extend_from_slice(ds.row(first));
    let mut best: Vec<f64> = ds.rows().map(|x| sq_dist_fast(x, ds.row(first))).collect();
    for _ in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform() * total;
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            while chosen[pick] || best[pick] == 0.0 {
                // float slack at the end of the scan; fall back to the
                // heaviest remaining point
                pick = best
                    .iter()
                    .enumerate()
                    .fold((0, -1.0), |b, (i, &w)| if w > b.1 { (i, w) } else { b })
                    .0;
                if best[pick] == 0.0 {
                    break;
                }
            }
            pick
        } else {
            // every point coincides with a centroid: take any unused point
            let skip = rng.below(n - chosen.iter().filter(|&&c| c).count());
            (0..n).filter(|&i| !chosen[i]).nth(skip).unwrap_or(0)
        };
        chosen[pick] = true;
        let row = ds.row(pick);
        centroids.extend_from_slice(row);
        for (b, x) in best.iter_mut().zip(ds.rows()) {
            let v = sq_dist_fast(x, row);
            if v < *b {
                *b = v;
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SynthSpec;

    #[test]
    fn k_out_of_range() {
        let ds = Dataset::new(1, alloc::vec![1.0, 2.0]).unwrap();
        assert!(kmeans(&ds, 0, 10, 1).is_err());
        assert!(kmeans(&ds, 3, 10, 1).is_err());
    }

    #[test]
    fn k_equals_n_gives_zero_objective() {
        let ds = crate::synth_dataset(20, 4, 3, 1.0, 2).unwrap();
        let km = kmeans(&ds, 20, 10, 1).unwrap();
        assert_eq!(*km.objective.last().unwrap(), 0.0);
        let mut seen = alloc::vec![false; 20];
        for &a in &km.assignments {
            assert!(!seen[a as usize]);
            seen[a as usize] = true;
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let ds = crate::synth_dataset(50, 3, 2, 1.0, 4).unwrap();
        let km = kmeans(&ds, 1, 10, 1).unwrap();
        for j in 0..3 {
            let mean: f64 = ds.rows().map(|r| r[j] as f64).sum::<f64>() / 50.0;
            assert!((km.centroids[j] as f64 - mean).abs() < 1e-5);
        }
    }

    #[test]
    fn objective_never_increases() {
        let ds = SynthSpec::new(2000, 8, 12, 1.0, 3).generate().unwrap().base;
        let km = kmeans(&ds, 30, 50, 7).unwrap();
        for w in km.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{w:?}");
        }
    }

    #[test]
    fn duplicate_points_still_seed() {
        let ds = Dataset::new(2, alloc::vec![1.0; 20]).unwrap();
        let km = kmeans(&ds, 4, 5, 1).unwrap();
        assert_eq!(km.centroids.len(), 8);
        assert_eq!(*km.objective.last().unwrap(), 0.0);
    }

    #[test]
    fn two_blobs_recovered() {
        let out = SynthSpec::new(400, 4, 2, 1.0, 8).generate().unwrap();
        let km = kmeans(&out.base, 2, 50, 1).unwrap();
        for b in 0..2 {
            let gen = &out.centers[b * 4..(b + 1) * 4];
            let best = (0..2)
                .map(|c| {
                    (0..4)
                        .map(|j| (km.centroids[c * 4 + j] as f64 - gen[j]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 0.5, "{best}");
        }
    }
}
