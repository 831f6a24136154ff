#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankshape::Scalar;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix<T: Scalar>(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    DMatrix::from_fn(n, m, |_, _| T::from_parts(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// `B Bᴴ / N + I/2`: PD with bounded condition number.
pub fn random_pd<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    let b = random_matrix::<T>(n, n, rng);
    let mut v = (&b * b.adjoint()).unscale(n as f64);
    for i in 0..n {
        v[(i, i)] += T::from_real(0.5);
    }
    (&v + v.adjoint()).unscale(2.0)
}

pub fn random_hermitian<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<T> {
    let b = random_matrix::<T>(n, n, rng);
    (&b + b.adjoint()).unscale(2.0)
}

pub fn rel_frob<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn toeplitz_c(n: usize, rho: Complex64) -> DMatrix<Complex64> {
    DMatrix::from_fn(n, n, |i, j| if i >= j { rho.powi((i - j) as i32) } else { rho.conj().powi((j - i) as i32) })
}
