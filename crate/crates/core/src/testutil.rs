//! Generic phase-space points and RNG helpers shared by tests and benchmarks.

use faer::Mat;
use num_complex::Complex64 as c64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::phase_space::PhaseSpacePoint;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat<c64> {
    Mat::from_fn(rows, cols, |_, _| {
        c64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    })
}

/// A point with independent standard complex Gaussian entries, scaled so
/// that entries are O(1/sqrt(n)) like a physical Green's function.
pub fn random_point<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> PhaseSpacePoint {
    let scale = 0.5 / (n_sites as f64).sqrt();
    let mut gen = || {
        let mut m = random_complex_matrix(n_sites, n_sites, rng);
        for j in 0..n_sites {
            for i in 0..n_sites {
                m[(i, j)] *= scale;
            }
            m[(j, j)] += c64::new(0.5, 0.0);
        }
        m
    };
    let up = gen();
    let down = gen();
    PhaseSpacePoint::new(up, down).expect("square blocks")
}
