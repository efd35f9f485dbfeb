//! Deterministic generators shared by the unit, integration, and acceptance
//! test suites. Everything here is seeded; no test draws from ambient
//! entropy.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::SpdMatrix;

/// Seeded generator used across the test suites.
pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform direction on the unit sphere.
pub fn unit_vector<R: Rng>(dim: usize, r: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Random SPD matrices `A A^T + ridge * I` with controllable scale.
pub struct SpdSampler {
    dim: usize,
    scale: f64,
    ridge: f64,
}

impl SpdSampler {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            scale: 1.0,
            ridge: 0.1,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn sample<R: Rng>(&self, r: &mut R) -> SpdMatrix {
        let a = DMatrix::from_fn(self.dim, self.dim, |_, _| {
            r.sample::<f64, _>(StandardNormal)
        });
        let m = (&a * a.transpose() + self.ridge * DMatrix::identity(self.dim, self.dim))
            * (self.scale * self.scale);
        SpdMatrix::new(m).expect("A A^T + ridge I is SPD")
    }
}

/// Random square matrix with singular values in [0.5, 2], so solves lose
/// at most a couple of digits.
pub fn well_conditioned_matrix<R: Rng>(n: usize, r: &mut R) -> DMatrix<f64> {
    let q1 = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal))
        .qr()
        .q();
    let q2 = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal))
        .qr()
        .q();
    let s = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| r.gen_range(0.5..2.0)));
    q1 * s * q2.transpose()
}

/// Deterministic quasi-uniform covering of the unit sphere in 3 dimensions
/// (Fibonacci lattice), used by grid-search oracles.
pub fn fibonacci_sphere(count: usize) -> Vec<DVector<f64>> {
    let golden = (1.0 + 5.0f64.sqrt()) / 2.0;
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * std::f64::consts::PI * (i as f64 / golden).fract();
            DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
        })
        .collect()
}
