//! Random orthogonal rotation applied to data and query vectors.
//!
//! Reading the first `d` coordinates of a rotated vector is the same as
//! projecting it with the first `d` rows of the matrix, so prefixes of a
//! rotated vector behave like Johnson-Lindenstrauss projections of growing
//! dimension while the full vector keeps every distance.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::Dataset;
use crate::error::{invalid, Error, Result};
use crate::rng::NormalStream;

/// Dense `dim x dim` orthogonal matrix, row-major, 64-bit entries.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformMatrix {
    dim: usize,
    entries: Vec<f64>,
    seed: u64,
}

impl TransformMatrix {
    /// Orthonormalizes an i.i.d. standard normal matrix drawn from `seed`.
    ///
    /// Rows are processed with modified Gram-Schmidt and a second
    /// re-orthogonalization pass, which keeps `P P^T` within 1e-10 of the
    /// identity at the dimensions we care about (up to ~1000).
    pub fn generate(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("transform dimension must be at least 1"));
        }
        let mut rng = NormalStream::new(seed, 0x7472_616e);
        let mut m: Vec<f64> = (0..dim * dim).map(|_| rng.normal()).collect();
        for i in 0..dim {
            let (done, rest) = m.split_at_mut(i * dim);
            let row = &mut rest[..dim];
            for _pass in 0..2 {
                for q in done.chunks_exact(dim) {
                    let proj = dot64(row, q);
                    for (r, qv) in row.iter_mut().zip(q) {
                        *r -= proj * qv;
                    }
                }
            }
            let norm = libm::sqrt(dot64(row, row));
            if norm < 1e-12 {
                // Measure-zero event for Gaussian input.
                return Err(invalid("degenerate Gaussian draw; try another seed"));
            }
            for r in row.iter_mut() {
                *r /= norm;
            }
        }
        Ok(Self { dim, entries: m, seed })
    }

    /// Rebuilds a matrix from stored entries (e.g. a persisted file).
    /// Orthogonality is not re-checked; see [`Self::orthogonality_error`].
    pub fn from_entries(dim: usize, entries: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || entries.len() != dim * dim {
            return Err(invalid("matrix entries must be dim x dim"));
        }
        Ok(Self { dim, entries, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    /// Largest entry of `|P P^T - I|`.
    pub fn orthogonality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..=i {
                let v = dot64(self.row(i), self.row(j)) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// `P x`, computed in 64-bit and rounded to 32-bit.
    pub fn apply(&self, x: &[f32]) -> Result<Vec<f32>> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, x: &[f32], out: &mut [f32]) -> Result<()> {
        self.check_len(x.len())?;
        self.check_len(out.len())?;
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.dim)) {
            *o = dot_mixed(row, x) as f32;
        }
        Ok(())
    }

    /// First `d` coordinates of `P x`, using only the first `d` rows.
    pub fn apply_prefix(&self, x: &[f32], d: usize) -> Result<Vec<f32>> {
        self.check_len(x.len())?;
        if d > self.dim {
            return Err(invalid("prefix longer than the dimension"));
        }
        Ok(self.entries[..d * self.dim]
            .chunks_exact(self.dim)
            .map(|row| dot_mixed(row, x) as f32)
            .collect())
    }

    /// `P^T y`, the inverse rotation.
    pub fn apply_transpose(&self, y: &[f32]) -> Result<Vec<f32>> {
        self.check_len(y.len())?;
        let mut acc = vec![0.0f64; self.dim];
        for (row, &yi) in self.entries.chunks_exact(self.dim).zip(y) {
            let yi = yi as f64;
            for (a, p) in acc.iter_mut().zip(row) {
                *a += p * yi;
            }
        }
        Ok(acc.into_iter().map(|v| v as f32).collect())
    }

    /// Rotates every row of `ds`.
    pub fn apply_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        ds.check_dim(self.dim)?;
        let mut out = vec![0.0f32; ds.n() * self.dim];
        for (x, y) in ds.rows().zip(out.chunks_exact_mut(self.dim)) {
            self.apply_into(x, y)?;
        }
        Dataset::new(self.dim, out)
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got,
            });
        }
        Ok(())
    }
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Four independent partial sums, so rotating a query is not bound by the
/// latency of one long addition chain.
fn dot_mixed(a: &[f64], x: &[f32]) -> f64 {
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cx = x.chunks_exact(4);
    for (p, v) in (&mut ca).zip(&mut cx) {
        for l in 0..4 {
            acc[l] += p[l] * v[l] as f64;
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cx.remainder())
        .map(|(p, &v)| p * v as f64)
        .sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;

    fn gaussian(rng: &mut NormalStream, d: usize) -> Vec<f32> {
        (0..d).map(|_| rng.normal() as f32).collect()
    }

    fn norm(x: &[f32]) -> f64 {
        libm::sqrt(x.iter().map(|&v| v as f64 * v as f64).sum())
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(TransformMatrix::generate(0, 1).is_err());
    }

    #[test]
    fn one_by_one_is_plus_or_minus_one() {
        for seed in 0..10 {
            let m = TransformMatrix::generate(1, seed).unwrap();
            assert_eq!(m.entries()[0].abs(), 1.0);
        }
    }

    #[test]
    fn orthonormal_rows_at_64() {
        let m = TransformMatrix::generate(64, 3).unwrap();
        assert!(m.orthogonality_error() <= 1e-10);
    }

    #[test]
    fn deterministic_by_seed() {
        let a = TransformMatrix::generate(16, 11).unwrap();
        let b = TransformMatrix::generate(16, 11).unwrap();
        let c = TransformMatrix::generate(16, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn apply_checks_length() {
        let m = TransformMatrix::generate(4, 1).unwrap();
        assert!(matches!(
            m.apply(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn zero_maps_to_zero_and_basis_to_column() {
        let m = TransformMatrix::generate(8, 2).unwrap();
        assert!(m.apply(&[0.0; 8]).unwrap().iter().all(|&v| v == 0.0));
        let mut e1 = [0.0f32; 8];
        e1[0] = 1.0;
        let y = m.apply(&e1).unwrap();
        for (i, &v) in y.iter().enumerate() {
            assert_eq!(v, m.row(i)[0] as f32);
        }
    }

    #[test]
    fn norm_preserved() {
        let m = TransformMatrix::generate(32, 5).unwrap();
        let mut rng = NormalStream::new(1, 0);
        for _ in 0..10_000 {
            let x = gaussian(&mut rng, 32);
            let ratio = norm(&m.apply(&x).unwrap()) / norm(&x);
            assert!((ratio - 1.0).abs() <= 1e-5, "{ratio}");
        }
    }

    #[test]
    fn prefix_rows_match_prefix_of_full_product() {
        let m = TransformMatrix::generate(48, 9).unwrap();
        let mut rng = NormalStream::new(2, 0);
        for d in [1, 7, 32, 48] {
            let x = gaussian(&mut rng, 48);
            let full = m.apply(&x).unwrap();
            assert_eq!(&full[..d], m.apply_prefix(&x, d).unwrap().as_slice());
        }
    }

    #[test]
    fn transpose_inverts() {
        let m = TransformMatrix::generate(40, 4).unwrap();
        let mut rng = NormalStream::new(3, 0);
        for _ in 0..100 {
            let x = gaussian(&mut rng, 40);
            let back = m.apply_transpose(&m.apply(&x).unwrap()).unwrap();
            let err: f64 = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(err <= 1e-5 * norm(&x));
        }
    }

    #[test]
    fn first_coordinate_estimates_squared_norm() {
        // E[D * y_1^2 / |x|^2] = 1 over random rotations.
        let d = 32;
        let mut rng = NormalStream::new(77, 0);
        let mut total = 0.0;
        let trials = 1000;
        for t in 0..trials {
            let m = TransformMatrix::generate(d, 1000 + t).unwrap();
            let x = gaussian(&mut rng, d);
            let y1 = m.apply_prefix(&x, 1).unwrap()[0] as f64;
            let n = norm(&x);
            total += d as f64 * y1 * y1 / (n * n);
        }
        let mean = total / trials as f64;
        assert!((0.8..=1.2).contains(&mean), "{mean}");
    }

    #[test]
    fn dataset_rotation_is_rowwise_and_isometric() {
        let m = TransformMatrix::generate(16, 6).unwrap();
        let mut rng = NormalStream::new(4, 0);
        let raw: Vec<f32> = (0..50 * 16).map(|_| rng.normal() as f32).collect();
        let ds = Dataset::new(16, raw).unwrap();
        let out = m.apply_dataset(&ds).unwrap();
        assert_eq!(out.row(3), m.apply(ds.row(3)).unwrap().as_slice());
        for i in 0..50 {
            for j in 0..i {
                let dx: Vec<f32> = ds.row(i).iter().zip(ds.row(j)).map(|(a, b)| a - b).collect();
                let dy: Vec<f32> = out.row(i).iter().zip(out.row(j)).map(|(a, b)| a - b).collect();
                assert!((norm(&dy) - norm(&dx)).abs() <= 1e-5 * norm(&dx));
            }
        }
        let wrong = Dataset::new(8, alloc::vec![0.0; 8]).unwrap();
        assert!(m.apply_dataset(&wrong).is_err());
    }
}
