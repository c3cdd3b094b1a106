use rand::Rng;

use crate::channel::complex_gaussian;
use crate::numerics::{hermitian_part, CMat};

pub fn random_complex<R: Rng>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> CMat {
    complex_gaussian(rng, rows, cols, variance)
}

pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize) -> CMat {
    hermitian_part(&complex_gaussian(rng, n, n, 2.0))
}
