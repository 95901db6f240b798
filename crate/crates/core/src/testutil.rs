//! Random Gram matrices for property tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gram::{gram, GramMatrix, KernelSpec};

pub fn random_samples<R: Rng>(rng: &mut R, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(rng))
}

/// RBF Gram matrix of Gaussian samples with a log-uniform bandwidth, so that
/// entropies span most of `[0, log2 n]`.
pub fn random_gram<R: Rng>(rng: &mut R, n: usize) -> GramMatrix {
    let d = rng.gen_range(1..=5);
    let x = random_samples(rng, n, d);
    let sigma = 10f64.powf(rng.gen_range(-1.0..1.0)) * (d as f64).sqrt();
    gram(&x, &KernelSpec::rbf_fixed(sigma)).expect("valid gram")
}

pub fn random_gram_list<R: Rng>(rng: &mut R, n: usize, c: usize) -> Vec<GramMatrix> {
    (0..c).map(|_| random_gram(rng, n)).collect()
}
