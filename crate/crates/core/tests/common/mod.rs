#![allow(dead_code)]

use std::path::{Path, PathBuf};

use infoplane::tensor_io::{
    write_tensor, BatchEntry, Dtype, EpochEntry, ErrorEntry, LayerEntry, LayerKind, RunManifest,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn layer<R: Rng>(rng: &mut R, x: &DMatrix<f64>, width: usize) -> DMatrix<f64> {
    let w = normal(rng, x.ncols(), width) / (x.ncols() as f64).sqrt();
    (x * w).map(f64::tanh)
}

/// Writes a small run: `epochs` epochs of `batches` batches with n rows each.
///
/// Layers: `conv1` (3 maps), `conv2` (4 maps), `single` (1 map), `fc` (one tensor).
/// Errors: `out` (reference), `fc`, `conv2`.
pub fn write_run(dir: &Path, n: usize, epochs: usize, batches: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = RunManifest {
        run_id: "synthetic".into(),
        batch_size: n,
        epochs: Vec::new(),
        root: PathBuf::new(),
    };
    let mut put = |name: String, m: &DMatrix<f64>| {
        write_tensor(dir.join(&name), m, Dtype::Float32).unwrap();
        PathBuf::from(name)
    };
    for e in 0..epochs {
        let mut entries = Vec::new();
        for b in 0..batches {
            let tag = format!("e{e}_b{b}");
            let x = normal(&mut rng, n, 12);
            let labels = DMatrix::from_fn(n, 1, |i, _| (i % 4) as f64);
            let c1: Vec<DMatrix<f64>> = (0..3).map(|_| layer(&mut rng, &x, 6)).collect();
            let h1 = DMatrix::from_fn(n, 18, |i, j| c1[j / 6][(i, j % 6)]);
            let c2: Vec<DMatrix<f64>> = (0..4).map(|_| layer(&mut rng, &h1, 5)).collect();
            let h2 = DMatrix::from_fn(n, 20, |i, j| c2[j / 5][(i, j % 5)]);
            let single = layer(&mut rng, &h2, 4);
            let fc = layer(&mut rng, &single, 8);
            let out_err = normal(&mut rng, n, 4);
            let fc_err = layer(&mut rng, &out_err, 8);
            let c2_err = layer(&mut rng, &fc_err, 10);

            let conv = |put: &mut dyn FnMut(String, &DMatrix<f64>) -> PathBuf,
                        name: &str,
                        maps: &[DMatrix<f64>]| {
                LayerEntry {
                    name: name.into(),
                    kind: LayerKind::Conv,
                    tensors: maps
                        .iter()
                        .enumerate()
                        .map(|(k, m)| put(format!("{tag}_{name}_{k}.npy"), m))
                        .collect(),
                }
            };
            let layers = vec![
                conv(&mut put, "conv1", &c1),
                conv(&mut put, "conv2", &c2),
                conv(&mut put, "single", std::slice::from_ref(&single)),
                LayerEntry {
                    name: "fc".into(),
                    kind: LayerKind::Fc,
                    tensors: vec![put(format!("{tag}_fc.npy"), &fc)],
                },
            ];
            let errors = vec![
                ErrorEntry {
                    name: "out".into(),
                    tensor: put(format!("{tag}_d_out.npy"), &out_err),
                },
                ErrorEntry {
                    name: "fc".into(),
                    tensor: put(format!("{tag}_d_fc.npy"), &fc_err),
                },
                ErrorEntry {
                    name: "conv2".into(),
                    tensor: put(format!("{tag}_d_conv2.npy"), &c2_err),
                },
            ];
            entries.push(BatchEntry {
                batch: b * 50,
                input: put(format!("{tag}_x.npy"), &x),
                labels: put(format!("{tag}_y.npy"), &labels),
                layers,
                errors,
            });
        }
        manifest.epochs.push(EpochEntry {
            epoch: e + 1,
            batches: entries,
        });
    }
    let path = dir.join("manifest.json");
    manifest.save(&path).unwrap();
    path
}

pub fn argv(args: &[&str]) -> Vec<String> {
    std::iter::once("infoplane")
        .chain(args.iter().copied())
        .map(String::from)
        .collect()
}

/// Candidate for the permutation-test synthetic: `t` is a copy of the labels
/// (delta kernel) or independent Gaussian noise (RBF), and the rest of the
/// remaining set is one independent Gaussian noise filter.
pub struct PermutationCase {
    pub labels: infoplane::GramMatrix,
    pub remaining: Vec<infoplane::GramMatrix>,
    pub samples: DMatrix<f64>,
    pub kernel: infoplane::KernelSpec,
}

pub fn permutation_case(n: usize, informative: bool, seed: u64) -> PermutationCase {
    use infoplane::{gram, label_gram, KernelSpec};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<i64> = (0..n).map(|_| rng.gen_range(0..4)).collect();
    let rbf = KernelSpec::rbf_silverman(5.0);
    let rest = gram(&normal(&mut rng, n, 4), &rbf).unwrap();
    let (samples, kernel) = if informative {
        (
            DMatrix::from_iterator(n, 1, labels.iter().map(|&l| l as f64)),
            KernelSpec::LabelDelta,
        )
    } else {
        (normal(&mut rng, n, 4), rbf)
    };
    PermutationCase {
        labels: label_gram(&labels).unwrap(),
        remaining: vec![gram(&samples, &kernel).unwrap(), rest],
        samples,
        kernel,
    }
}

/// Eight-class labels, three filters that are the label bits and five
/// filters of random bits; all under the delta kernel.
pub fn bit_filters(
    n: usize,
    seed: u64,
) -> (infoplane::GramMatrix, Vec<infoplane::selection::Filter>) {
    use infoplane::{gram, label_gram, KernelSpec};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<i64> = (0..n).map(|i| (i % 8) as i64).collect();
    let mut filters = Vec::new();
    for k in 0..8 {
        let samples = if k < 3 {
            DMatrix::from_fn(n, 1, |i, _| ((labels[i] >> k) & 1) as f64)
        } else {
            DMatrix::from_fn(n, 1, |_, _| rng.gen_range(0..2) as f64)
        };
        filters.push(infoplane::selection::Filter {
            gram: gram(&samples, &KernelSpec::LabelDelta).unwrap(),
            samples,
        });
    }
    (label_gram(&labels).unwrap(), filters)
}
