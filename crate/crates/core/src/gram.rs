//! Normalized Gram matrices.
//!
//! Every entropy in this crate is a function of an `n × n` matrix `A` built from
//! a kernel matrix `K` as `A_ij = K_ij / (n * sqrt(K_ii * K_jj))`, so that
//! `tr(A) = 1` and every diagonal entry equals `1/n`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the unit-trace and uniform-diagonal checks.
pub const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Bandwidth {
    /// `sigma = h * n^(-1/(4+d))`
    Silverman {
        h: f64,
    },
    Fixed {
        sigma: f64,
    },
}

impl Bandwidth {
    pub fn resolve(&self, n: usize, d: usize) -> Result<f64> {
        match *self {
            Bandwidth::Silverman { h } => silverman_sigma(n, d, h),
            Bandwidth::Fixed { sigma } => Ok(sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum KernelSpec {
    /// `exp(-||x_i - x_j||^2 / (2 sigma^2))`
    Rbf { bandwidth: Bandwidth },
    /// 1 when two rows are identical, 0 otherwise. Used for class labels.
    LabelDelta,
}

impl KernelSpec {
    pub fn rbf_silverman(h: f64) -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Silverman { h },
        }
    }

    pub fn rbf_fixed(sigma: f64) -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::Fixed { sigma },
        }
    }
}

/// Default Silverman scale for input and activation chains.
pub const DEFAULT_H_FORWARD: f64 = 5.0;
/// Default Silverman scale for error-signal chains.
pub const DEFAULT_H_ERROR: f64 = 0.1;

/// Silverman's rule of thumb, `h * n^(-1/(4+d))`.
pub fn silverman_sigma(n: usize, d: usize, h: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "sample count must be positive"));
    }
    if d == 0 {
        return Err(Error::invalid("d", "sample dimension must be positive"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(
            "h",
            format!("must be positive and finite, got {h}"),
        ));
    }
    Ok(h * (n as f64).powf(-1.0 / (4.0 + d as f64)))
}

/// Symmetric, unit-trace matrix with diagonal `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(DMatrix<f64>);

impl GramMatrix {
    /// `I / n`: every sample distinguishable.
    pub fn uniform_diagonal(n: usize) -> Self {
        GramMatrix(DMatrix::identity(n, n) / n as f64)
    }

    /// `ones / n`: every sample identical.
    pub fn constant(n: usize) -> Self {
        GramMatrix(DMatrix::from_element(n, n, 1.0 / n as f64))
    }

    /// Normalizes a raw kernel matrix.
    pub fn from_kernel(k: &DMatrix<f64>) -> Result<Self> {
        let n = k.nrows();
        if n == 0 {
            return Err(Error::Empty("kernel matrix"));
        }
        if !k.is_square() {
            return Err(Error::InvalidGram(format!(
                "kernel matrix is {}x{}",
                n,
                k.ncols()
            )));
        }
        let diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
        if let Some(i) = diag.iter().position(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::InvalidGram(format!(
                "K[{i},{i}] = {} is not positive",
                diag[i]
            )));
        }
        let inv_n = 1.0 / n as f64;
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                inv_n
            } else {
                inv_n * k[(i, j)] / (diag[i] * diag[j]).sqrt()
            }
        });
        let g = GramMatrix(a);
        g.check_symmetric()?;
        Ok(g)
    }

    /// Wraps an already normalized matrix after checking its structure.
    pub fn from_normalized(a: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 {
            return Err(Error::Empty("gram matrix"));
        }
        if !a.is_square() {
            return Err(Error::InvalidGram(format!("matrix is {}x{}", n, a.ncols())));
        }
        let inv_n = 1.0 / n as f64;
        if let Some(i) = (0..n).find(|&i| (a[(i, i)] - inv_n).abs() > STRUCTURE_TOL) {
            return Err(Error::InvalidGram(format!(
                "diagonal entry {i} is {}, expected 1/n = {inv_n}",
                a[(i, i)]
            )));
        }
        let trace = a.trace();
        if (trace - 1.0).abs() > STRUCTURE_TOL {
            return Err(Error::InvalidGram(format!("trace is {trace}, expected 1")));
        }
        if let Some(v) = a.iter().find(|v| v.is_nan() || **v < -STRUCTURE_TOL) {
            return Err(Error::InvalidGram(format!(
                "entry {v} is negative or not finite"
            )));
        }
        let g = GramMatrix(a);
        g.check_symmetric()?;
        Ok(g)
    }

    fn check_symmetric(&self) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.0[(i, j)] - self.0[(j, i)]).abs() > STRUCTURE_TOL {
                    return Err(Error::InvalidGram(format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn from_raw_unchecked(a: DMatrix<f64>) -> Self {
        GramMatrix(a)
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// `P A P^T` where row `i` of the result is row `perm[i]` of `A`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        assert_eq!(perm.len(), n, "permutation length");
        GramMatrix(DMatrix::from_fn(n, n, |i, j| self.0[(perm[i], perm[j])]))
    }
}

/// Rows of `samples` copied into contiguous storage.
fn rows_of(samples: &DMatrix<f64>) -> Vec<f64> {
    // nalgebra is column-major; the transpose's storage is row-major for `samples`.
    samples.transpose().as_slice().to_vec()
}

/// Builds the normalized Gram matrix of the rows of `samples`.
pub fn gram(samples: &DMatrix<f64>, kernel: &KernelSpec) -> Result<GramMatrix> {
    let (n, d) = samples.shape();
    if n == 0 {
        return Err(Error::Empty("sample matrix"));
    }
    let rows = rows_of(samples);
    let row = |i: usize| &rows[i * d..(i + 1) * d];
    let inv_n = 1.0 / n as f64;

    let mut a = DMatrix::<f64>::zeros(n, n);
    match kernel {
        KernelSpec::Rbf { bandwidth } => {
            let sigma = bandwidth.resolve(n, d)?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::DegenerateBandwidth(sigma));
            }
            let scale = -1.0 / (2.0 * sigma * sigma);
            for i in 0..n {
                a[(i, i)] = inv_n;
                let ri = row(i);
                for j in (i + 1)..n {
                    let dist2: f64 = ri.iter().zip(row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
                    let v = inv_n * (scale * dist2).exp();
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
            }
        }
        KernelSpec::LabelDelta => {
            for i in 0..n {
                a[(i, i)] = inv_n;
                let ri = row(i);
                for j in (i + 1)..n {
                    if ri == row(j) {
                        a[(i, j)] = inv_n;
                        a[(j, i)] = inv_n;
                    }
                }
            }
        }
    }
    Ok(GramMatrix(a))
}

/// Delta-kernel Gram matrix over integer class ids.
pub fn label_gram(labels: &[i64]) -> Result<GramMatrix> {
    if labels.is_empty() {
        return Err(Error::Empty("label vector"));
    }
    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    Ok(GramMatrix(DMatrix::from_fn(n, n, |i, j| {
        if labels[i] == labels[j] {
            inv_n
        } else {
            0.0
        }
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn silverman_values() {
        assert_eq!(silverman_sigma(1, 7, 5.0).unwrap(), 5.0);
        // high-precision reference values (40-digit evaluation of the formula)
        assert_relative_eq!(
            silverman_sigma(128, 784, 5.0).unwrap(),
            4.969_307_595_598_263,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            silverman_sigma(128, 100, 0.1).unwrap(),
            0.095_441_743_804_499_43,
            max_relative = 1e-14
        );
    }

    #[test]
    fn silverman_rejects_bad_inputs() {
        assert!(silverman_sigma(0, 1, 1.0).is_err());
        assert!(silverman_sigma(1, 0, 1.0).is_err());
        assert!(silverman_sigma(1, 1, 0.0).is_err());
        assert!(silverman_sigma(1, 1, -2.0).is_err());
    }

    #[test]
    fn identical_rows_give_half_matrix() {
        let x = DMatrix::from_row_slice(2, 2, &[0.3, -1.0, 0.3, -1.0]);
        let a = gram(&x, &KernelSpec::rbf_silverman(5.0)).unwrap();
        assert_eq!(a.matrix(), &DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn distant_rows_decouple() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1e3]);
        let a = gram(&x, &KernelSpec::rbf_fixed(1.0)).unwrap();
        assert_eq!(a.matrix(), &(DMatrix::identity(2, 2) * 0.5));
    }

    #[test]
    fn three_point_rbf_by_hand() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let a = gram(&x, &KernelSpec::rbf_fixed(1.0)).unwrap();
        let m = a.matrix();
        assert_relative_eq!(m[(0, 1)], 0.202_176_886_570_877_8, max_relative = 1e-14);
        assert_relative_eq!(m[(0, 2)], 0.045_111_761_078_870_9, max_relative = 1e-14);
        assert_relative_eq!(m[(1, 2)], m[(0, 1)]);
        assert_relative_eq!(m.trace(), 1.0);
    }

    #[test]
    fn zero_bandwidth_is_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(matches!(
            gram(&x, &KernelSpec::rbf_fixed(0.0)),
            Err(Error::DegenerateBandwidth(_))
        ));
        assert!(matches!(
            gram(&DMatrix::zeros(0, 3), &KernelSpec::LabelDelta),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn label_gram_blocks() {
        let a = label_gram(&[0, 0, 1, 1]).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.25, 0.25, 0.0, 0.0, //
                0.25, 0.25, 0.0, 0.0, //
                0.0, 0.0, 0.25, 0.25, //
                0.0, 0.0, 0.25, 0.25,
            ],
        );
        assert_eq!(a.matrix(), &expected);
        assert_eq!(label_gram(&[3; 5]).unwrap(), GramMatrix::constant(5));
        assert_eq!(
            label_gram(&[0, 1, 2]).unwrap(),
            GramMatrix::uniform_diagonal(3)
        );
        assert!(label_gram(&[]).is_err());
    }

    #[test]
    fn delta_kernel_on_rows_matches_label_gram() {
        let labels = [2i64, 0, 2, 1, 0];
        let col = DMatrix::from_iterator(5, 1, labels.iter().map(|&l| l as f64));
        assert_eq!(
            gram(&col, &KernelSpec::LabelDelta).unwrap(),
            label_gram(&labels).unwrap()
        );
    }

    #[test]
    fn from_normalized_validates() {
        let ok = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.3, 0.5]);
        assert!(GramMatrix::from_normalized(ok).is_ok());
        let bad_diag = DMatrix::from_row_slice(2, 2, &[0.6, 0.3, 0.3, 0.4]);
        assert!(GramMatrix::from_normalized(bad_diag).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.2, 0.5]);
        assert!(GramMatrix::from_normalized(asym).is_err());
    }

    #[test]
    fn from_kernel_normalizes() {
        let k = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 1.0]);
        let a = GramMatrix::from_kernel(&k).unwrap();
        assert_relative_eq!(a.matrix()[(0, 1)], 0.25);
        assert_relative_eq!(a.matrix()[(0, 0)], 0.5);
    }

    fn samples(max_n: usize, max_d: usize) -> impl Strategy<Value = DMatrix<f64>> {
        (1..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
            proptest::collection::vec(-3.0f64..3.0, n * d)
                .prop_map(move |v| DMatrix::from_row_slice(n, d, &v))
        })
    }

    proptest! {
        #[test]
        fn rbf_gram_structure(x in samples(12, 5), h in 0.05f64..10.0) {
            let a = gram(&x, &KernelSpec::rbf_silverman(h)).unwrap();
            let m = a.matrix();
            let n = x.nrows();
            prop_assert!((m.trace() - 1.0).abs() < 1e-12);
            for i in 0..n {
                prop_assert!((m[(i, i)] - 1.0 / n as f64).abs() < 1e-12);
            }
            prop_assert!(m.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(m, &m.transpose());
            let min_eig = m.clone().symmetric_eigenvalues().min();
            prop_assert!(min_eig >= -1e-10 * n as f64);
            prop_assert!(GramMatrix::from_normalized(m.clone()).is_ok());
        }

        #[test]
        fn rbf_is_scale_invariant(x in samples(8, 4), sigma in 0.1f64..4.0, c in 0.1f64..10.0) {
            let a = gram(&x, &KernelSpec::rbf_fixed(sigma)).unwrap();
            let b = gram(&(&x * c), &KernelSpec::rbf_fixed(sigma * c)).unwrap();
            for (u, v) in a.matrix().iter().zip(b.matrix().iter()) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn row_permutation_conjugates(x in samples(8, 3), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let n = x.nrows();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let xp = DMatrix::from_fn(n, x.ncols(), |i, j| x[(perm[i], j)]);
            let kernel = KernelSpec::rbf_silverman(2.0);
            let a = gram(&x, &kernel).unwrap();
            let ap = gram(&xp, &kernel).unwrap();
            prop_assert_eq!(ap, a.permuted(&perm));
        }
    }
}
