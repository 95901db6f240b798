//! Pairwise redundancy/synergy surrogates for the feature maps of one layer.
//!
//! From the three measurable quantities `I(X;T^i)`, `I(X;T^j)` and
//! `I(X;{T^i,T^j})` two linear combinations of the partial information atoms
//! are available without estimating the atoms themselves:
//!
//! * trade-off `I(X;T^i) + I(X;T^j) - I(X;{T^i,T^j}) = Rdn - Syn`
//! * weighted non-redundant `2 I(X;{T^i,T^j}) - I(X;T^i) - I(X;T^j) = Unq_i + Unq_j + 2 Syn`

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{mmi, EntropyConfig};
use crate::error::{Error, Result};
use crate::gram::GramMatrix;

/// Largest pair count evaluated exhaustively by [`PairSamplingPolicy::default_for`].
pub const DEFAULT_MAX_PAIRS: usize = 2016;

/// Pairs whose joint information falls below this are left out of the percentages.
pub const MIN_PAIR_MMI: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PairSamplingPolicy {
    Exhaustive,
    Random { k: usize, seed: u64 },
}

impl PairSamplingPolicy {
    /// Exhaustive up to [`DEFAULT_MAX_PAIRS`] pairs, random sampling of that many beyond.
    pub fn default_for(c: usize, seed: u64) -> Self {
        if pair_count(c) <= DEFAULT_MAX_PAIRS {
            PairSamplingPolicy::Exhaustive
        } else {
            PairSamplingPolicy::Random {
                k: DEFAULT_MAX_PAIRS,
                seed,
            }
        }
    }

    /// Unordered pairs `(i, j)`, `i < j`, in lexicographic order.
    pub fn pairs(&self, c: usize) -> Result<Vec<(usize, usize)>> {
        let all = pair_count(c);
        match *self {
            PairSamplingPolicy::Exhaustive => Ok(all_pairs(c).collect()),
            PairSamplingPolicy::Random { k, seed } => {
                if k == 0 || k > all {
                    return Err(Error::invalid(
                        "pair_count",
                        format!("need 1 <= k <= {all} for {c} feature maps, got {k}"),
                    ));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut picked = index::sample(&mut rng, all, k).into_vec();
                picked.sort_unstable();
                Ok(picked.into_iter().map(|p| pair_at(c, p)).collect())
            }
        }
    }
}

pub fn pair_count(c: usize) -> usize {
    c * c.saturating_sub(1) / 2
}

fn all_pairs(c: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..c).flat_map(move |i| ((i + 1)..c).map(move |j| (i, j)))
}

/// Inverse of the lexicographic pair enumeration.
fn pair_at(c: usize, mut p: usize) -> (usize, usize) {
    let mut i = 0;
    loop {
        let row = c - 1 - i;
        if p < row {
            return (i, i + 1 + p);
        }
        p -= row;
        i += 1;
    }
}

/// The three mutual informations measured for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerms {
    pub mi_i: f64,
    pub mi_j: f64,
    pub mi_joint: f64,
}

impl PairTerms {
    pub fn measure(
        b: &GramMatrix,
        ai: &GramMatrix,
        aj: &GramMatrix,
        cfg: &EntropyConfig,
    ) -> Result<Self> {
        Ok(Self {
            mi_i: mmi(b, std::slice::from_ref(ai), cfg)?.bits,
            mi_j: mmi(b, std::slice::from_ref(aj), cfg)?.bits,
            mi_joint: mmi(b, &[ai.clone(), aj.clone()], cfg)?.bits,
        })
    }

    pub fn tradeoff(&self) -> f64 {
        self.mi_i + self.mi_j - self.mi_joint
    }

    pub fn nonredundant(&self) -> f64 {
        2.0 * self.mi_joint - self.mi_i - self.mi_j
    }
}

/// Redundancy minus synergy for the pair `(T^i, T^j)` about `B`.
pub fn tradeoff(
    b: &GramMatrix,
    ai: &GramMatrix,
    aj: &GramMatrix,
    cfg: &EntropyConfig,
) -> Result<f64> {
    Ok(PairTerms::measure(b, ai, aj, cfg)?.tradeoff())
}

/// Unique information of both maps plus twice their synergy about `B`.
pub fn nonredundant(
    b: &GramMatrix,
    ai: &GramMatrix,
    aj: &GramMatrix,
    cfg: &EntropyConfig,
) -> Result<f64> {
    Ok(PairTerms::measure(b, ai, aj, cfg)?.nonredundant())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidReport {
    pub layer: String,
    pub tradeoff_bits: f64,
    pub nonredundant_bits: f64,
    /// Mean over pairs of `tradeoff / I(X;{T^i,T^j})`; `None` if every pair was skipped.
    pub tradeoff_pct: Option<f64>,
    pub nonredundant_pct: Option<f64>,
    pub pairs_evaluated: usize,
    /// Pairs left out of the percentage averages because their joint MMI was ~0.
    pub pairs_skipped: usize,
}

/// Averages the pairwise surrogates over the sampled pairs of `grams`.
pub fn layer_pid(
    layer: &str,
    b: &GramMatrix,
    grams: &[GramMatrix],
    policy: &PairSamplingPolicy,
    cfg: &EntropyConfig,
) -> Result<PidReport> {
    let c = grams.len();
    if c < 2 {
        return Err(Error::invalid(
            "feature_maps",
            format!("pairwise decomposition needs at least 2 feature maps, got {c}"),
        ));
    }
    let pairs = policy.pairs(c)?;

    // Single-map terms are shared between pairs.
    let singles = crate::par::map(grams, |g| Ok(mmi(b, std::slice::from_ref(g), cfg)?.bits))?;
    let terms = crate::par::map(&pairs, |&(i, j)| {
        Ok(PairTerms {
            mi_i: singles[i],
            mi_j: singles[j],
            mi_joint: mmi(b, &[grams[i].clone(), grams[j].clone()], cfg)?.bits,
        })
    })?;

    let count = terms.len() as f64;
    let tradeoff_bits = terms.iter().map(PairTerms::tradeoff).sum::<f64>() / count;
    let nonredundant_bits = terms.iter().map(PairTerms::nonredundant).sum::<f64>() / count;

    let kept: Vec<&PairTerms> = terms
        .iter()
        .filter(|t| t.mi_joint >= MIN_PAIR_MMI)
        .collect();
    let (tradeoff_pct, nonredundant_pct) = if kept.is_empty() {
        (None, None)
    } else {
        let k = kept.len() as f64;
        (
            Some(kept.iter().map(|t| t.tradeoff() / t.mi_joint).sum::<f64>() / k),
            Some(
                kept.iter()
                    .map(|t| t.nonredundant() / t.mi_joint)
                    .sum::<f64>()
                    / k,
            ),
        )
    };

    Ok(PidReport {
        layer: layer.to_string(),
        tradeoff_bits,
        nonredundant_bits,
        tradeoff_pct,
        nonredundant_pct,
        pairs_evaluated: terms.len(),
        pairs_skipped: terms.len() - kept.len(),
    })
}
