use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded stream of uniforms and standard normals.
///
/// ChaCha is counter based, so a given `(seed, stream)` pair produces the
/// same sequence on every platform. Normals come from Box-Muller, both
/// outputs of each pair are used.
pub(crate) struct NormalStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NormalStream {
    pub(crate) fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// Uniform on the open interval (0, 1).
    pub(crate) fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub(crate) fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub(crate) fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        self.spare = Some(radius * libm::sin(theta));
        radius * libm::cos(theta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normals_have_unit_moments() {
        let mut s = NormalStream::new(7, 0);
        let n = 200_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: std::vec::Vec<f64> = (0..8)
            .map({
                let mut s = NormalStream::new(1, 3);
                move |_| s.normal()
            })
            .collect();
        let b: std::vec::Vec<f64> = (0..8)
            .map({
                let mut s = NormalStream::new(1, 3);
                move |_| s.normal()
            })
            .collect();
        let c = NormalStream::new(1, 4).normal();
        assert_eq!(a, b);
        assert_ne!(a[0], c);
    }
}
