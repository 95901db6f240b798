//! Matrix-based Rényi α-entropy and the information quantities derived from it.
//!
//! For a normalized Gram matrix `A` with eigenvalues `λ_i`,
//!
//! ```text
//! S_α(A) = 1/(1-α) · log2( Σ_i λ_i^α )
//! ```
//!
//! Joint entropy of several variables observed on the same `n` samples is the
//! entropy of the trace-normalized Hadamard product of their Gram matrices, and
//! mutual information follows by inclusion–exclusion. All results are in bits.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::GramMatrix;

/// Round-off band within which a negative information estimate is treated as 0.
pub const NEGATIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyConfig {
    /// Rényi order; must be positive and different from 1.
    pub alpha: f64,
    /// Eigenvalues below this are set to zero.
    pub eig_clamp: f64,
    /// Relative off-diagonal mass below which a Hadamard chain is reported as saturated.
    pub saturation_epsilon: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            alpha: 1.01,
            eig_clamp: 1e-12,
            saturation_epsilon: 1e-3,
        }
    }
}

impl EntropyConfig {
    pub fn with_alpha(alpha: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || self.alpha == 1.0 {
            return Err(Error::invalid(
                "alpha",
                format!("Rényi order must be positive and != 1, got {}", self.alpha),
            ));
        }
        if self.eig_clamp.is_nan() || self.eig_clamp < 0.0 {
            return Err(Error::invalid("eig_clamp", "must be nonnegative"));
        }
        if self.saturation_epsilon.is_nan() || self.saturation_epsilon < 0.0 {
            return Err(Error::invalid("saturation_epsilon", "must be nonnegative"));
        }
        Ok(())
    }
}

/// An entropy in bits, `0 <= bits <= log2(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub bits: f64,
    pub n: usize,
}

/// A (multivariate or conditional) mutual information estimate in bits.
///
/// Values in `[-NEGATIVE_TOL, 0)` are reported as 0. Anything more negative is
/// kept as is and flagged, since nonnegativity is not guaranteed for α != 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutualInfo {
    pub bits: f64,
    pub n: usize,
    pub negative: bool,
}

impl MutualInfo {
    fn from_raw(raw: f64, n: usize) -> Self {
        if raw < -NEGATIVE_TOL {
            MutualInfo {
                bits: raw,
                n,
                negative: true,
            }
        } else {
            MutualInfo {
                bits: raw.max(0.0),
                n,
                negative: false,
            }
        }
    }
}

/// Clamped, renormalized eigenvalues of `A` in ascending order.
pub fn spectrum(a: &GramMatrix, cfg: &EntropyConfig) -> Result<Vec<f64>> {
    let m = a.matrix();
    let n = a.n();
    let scale = m.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Eigen(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut eig: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    if eig.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    eig.sort_by(f64::total_cmp);
    if let Some(&min) = eig.first() {
        if min < -1e-10 * n as f64 {
            return Err(Error::InvalidGram(format!(
                "not positive semidefinite (min eigenvalue {min:e})"
            )));
        }
    }

    let before: f64 = eig.iter().sum();
    for v in eig.iter_mut() {
        *v = if *v < cfg.eig_clamp { 0.0 } else { v.min(1.0) };
    }
    let after: f64 = eig.iter().sum();
    if (after - before).abs() > 1e-12 && after > 0.0 {
        for v in eig.iter_mut() {
            *v /= after;
        }
    }
    Ok(eig)
}

/// Rényi entropy (bits) of a probability vector summing to one.
///
/// Evaluated as `log2(1 + Σ λ (λ^(α-1) - 1)) / (1-α)`, which keeps full
/// precision when α is close to 1.
pub fn renyi_of_spectrum(eig: &[f64], alpha: f64) -> f64 {
    let excess: f64 = eig
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| l * ((alpha - 1.0) * l.ln()).exp_m1())
        .sum();
    excess.ln_1p() / std::f64::consts::LN_2 / (1.0 - alpha)
}

/// `S_α(A)` in bits.
pub fn matrix_entropy(a: &GramMatrix, cfg: &EntropyConfig) -> Result<EntropyValue> {
    cfg.validate()?;
    let eig = spectrum(a, cfg)?;
    let n = a.n();
    let bits = renyi_of_spectrum(&eig, cfg.alpha).clamp(0.0, (n as f64).log2());
    Ok(EntropyValue { bits, n })
}

fn common_n<'a>(mut grams: impl Iterator<Item = &'a GramMatrix>) -> Result<usize> {
    let first = grams.next().ok_or(Error::Empty("list of Gram matrices"))?;
    let n = first.n();
    for g in grams {
        if g.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.n(),
            });
        }
    }
    Ok(n)
}

/// `(A_1 ∘ … ∘ A_C) / tr(A_1 ∘ … ∘ A_C)`, renormalized after every factor so
/// that long chains do not underflow.
pub fn normalized_hadamard<'a, I>(grams: I) -> Result<GramMatrix>
where
    I: IntoIterator<Item = &'a GramMatrix>,
{
    let mut iter = grams.into_iter();
    let first = iter.next().ok_or(Error::Empty("list of Gram matrices"))?;
    let n = first.n();
    let mut acc: DMatrix<f64> = first.matrix().clone();
    for (factors, g) in (2..).zip(iter) {
        if g.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: g.n(),
            });
        }
        acc.component_mul_assign(g.matrix());
        let tr = acc.trace();
        if tr == 0.0 {
            return Err(Error::TraceUnderflow { factors });
        }
        acc /= tr;
    }
    Ok(GramMatrix::from_raw_unchecked(acc))
}

/// Joint entropy of the variables whose Gram matrices are given.
pub fn joint_entropy(grams: &[GramMatrix], cfg: &EntropyConfig) -> Result<EntropyValue> {
    joint_entropy_of(grams.iter(), cfg)
}

pub(crate) fn joint_entropy_of<'a, I>(grams: I, cfg: &EntropyConfig) -> Result<EntropyValue>
where
    I: IntoIterator<Item = &'a GramMatrix>,
{
    let h = normalized_hadamard(grams)?;
    matrix_entropy(&h, cfg)
}

/// `I(B; {A_1..A_C}) = S(B) + S(A_1..A_C) - S(A_1..A_C, B)`.
///
/// Non-negative for `alpha` near 1. Far from 1 the joint entropy can exceed the
/// sum of its parts and the result may come out negative; see
/// [`MutualInfo::negative`].
pub fn mmi(b: &GramMatrix, grams: &[GramMatrix], cfg: &EntropyConfig) -> Result<MutualInfo> {
    let n = common_n(grams.iter().chain(std::iter::once(b)))?;
    let hb = matrix_entropy(b, cfg)?.bits;
    let ha = joint_entropy(grams, cfg)?.bits;
    let hab = joint_entropy_of(grams.iter().chain(std::iter::once(b)), cfg)?.bits;
    Ok(MutualInfo::from_raw(hb + ha - hab, n))
}

/// `I(R; Y | S) = H(R,S) + H(Y,S) - H(S) - H(R,Y,S)`.
///
/// With an empty conditioning set this is the plain mutual information `I(R; Y)`.
pub fn cmi(
    remaining: &[GramMatrix],
    y: &GramMatrix,
    conditioning: &[GramMatrix],
    cfg: &EntropyConfig,
) -> Result<MutualInfo> {
    if remaining.is_empty() {
        return Err(Error::Empty(
            "remaining set of a conditional mutual information",
        ));
    }
    let n = common_n(
        remaining
            .iter()
            .chain(conditioning)
            .chain(std::iter::once(y)),
    )?;
    let y1 = std::iter::once(y);

    let h_rs = joint_entropy_of(remaining.iter().chain(conditioning), cfg)?.bits;
    let h_ys = joint_entropy_of(y1.clone().chain(conditioning), cfg)?.bits;
    let h_s = if conditioning.is_empty() {
        0.0
    } else {
        joint_entropy(conditioning, cfg)?.bits
    };
    let h_rys = joint_entropy_of(remaining.iter().chain(y1).chain(conditioning), cfg)?.bits;
    Ok(MutualInfo::from_raw(h_rs + h_ys - h_s - h_rys, n))
}

/// `I(R; Y | S ∪ {t})` for many candidates `t` with fixed `R`, `Y` and `S`.
///
/// The Hadamard products over the fixed sets are formed once; each candidate
/// only adds one more factor to each of the four joint terms.
#[derive(Debug, Clone)]
pub struct ConditionalBase {
    n: usize,
    rs: GramMatrix,
    ys: GramMatrix,
    s: Option<GramMatrix>,
    rys: GramMatrix,
}

impl ConditionalBase {
    pub fn new(
        remaining: &[GramMatrix],
        y: &GramMatrix,
        conditioning: &[GramMatrix],
    ) -> Result<Self> {
        if remaining.is_empty() {
            return Err(Error::Empty(
                "remaining set of a conditional mutual information",
            ));
        }
        let n = common_n(
            remaining
                .iter()
                .chain(conditioning)
                .chain(std::iter::once(y)),
        )?;
        let y1 = std::iter::once(y);
        Ok(Self {
            n,
            rs: normalized_hadamard(remaining.iter().chain(conditioning))?,
            ys: normalized_hadamard(y1.clone().chain(conditioning))?,
            s: if conditioning.is_empty() {
                None
            } else {
                Some(normalized_hadamard(conditioning)?)
            },
            rys: normalized_hadamard(remaining.iter().chain(y1).chain(conditioning))?,
        })
    }

    pub fn with_candidate(&self, t: &GramMatrix, cfg: &EntropyConfig) -> Result<MutualInfo> {
        if t.n() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: t.n(),
            });
        }
        let h = |base: &GramMatrix| joint_entropy_of([base, t], cfg).map(|v| v.bits);
        let h_s = match &self.s {
            Some(s) => h(s)?,
            None => matrix_entropy(t, cfg)?.bits,
        };
        Ok(MutualInfo::from_raw(
            h(&self.rs)? + h(&self.ys)? - h_s - h(&self.rys)?,
            self.n,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Saturation {
    Ok { mean_off_diagonal: f64 },
    Saturated { mean_off_diagonal: f64 },
}

impl Saturation {
    pub fn is_saturated(&self) -> bool {
        matches!(self, Saturation::Saturated { .. })
    }

    pub fn mean_off_diagonal(&self) -> f64 {
        match *self {
            Saturation::Ok { mean_off_diagonal } | Saturation::Saturated { mean_off_diagonal } => {
                mean_off_diagonal
            }
        }
    }
}

/// Flags Hadamard chains that have collapsed towards `I/n`.
///
/// Saturated when the mean off-diagonal entry of the normalized product is
/// below `epsilon / n`.
pub fn saturation_check(grams: &[GramMatrix], epsilon: f64) -> Result<Saturation> {
    let h = normalized_hadamard(grams)?;
    let n = h.n();
    if n < 2 {
        return Ok(Saturation::Ok {
            mean_off_diagonal: 0.0,
        });
    }
    let m = h.matrix();
    let off: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|ij| m[ij])
        .sum();
    let mean = off / (n * (n - 1)) as f64;
    Ok(if mean < epsilon / n as f64 {
        Saturation::Saturated {
            mean_off_diagonal: mean,
        }
    } else {
        Saturation::Ok {
            mean_off_diagonal: mean,
        }
    })
}
