//! Filter-count selection by a conditional-mutual-information permutation test,
//! and information-bottleneck filter scores for pruning.
//!
//! Selection grows a set `T_s` of accepted filters. For a candidate `t` taken
//! from the remaining set `T_r`, the observed `I(T_r - t; Y | T_s, t)` is
//! compared against the same quantity with the rows of `t` randomly permuted
//! (labels untouched). If the observed value is not smaller than almost every
//! permuted value, `t` adds nothing beyond chance and selection stops.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::{mmi, ConditionalBase, EntropyConfig};
use crate::error::{Error, Result};
use crate::gram::{gram, GramMatrix, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationTestConfig {
    pub permutations: usize,
    pub significance: f64,
    pub seed: u64,
}

impl Default for PermutationTestConfig {
    fn default() -> Self {
        Self {
            permutations: 100,
            significance: 0.05,
            seed: 0,
        }
    }
}

impl PermutationTestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::invalid(
                "permutations",
                "need at least one permutation",
            ));
        }
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(Error::invalid(
                "significance",
                format!("must lie in (0, 1), got {}", self.significance),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub candidate: usize,
    pub observed: f64,
    pub permuted: Vec<f64>,
    pub p_value: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub decision: Decision,
    /// `|T_s|` once the candidate's fate is applied: accepted candidates count.
    pub selected_count: usize,
    pub p_value: f64,
    pub trace: Vec<CandidateTrace>,
}

/// Row order for permutation `index` under `seed`. Each permutation draws from
/// its own ChaCha stream, so serial and parallel evaluation agree.
pub fn permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

fn permute_rows(samples: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(samples.nrows(), samples.ncols(), |i, j| {
        samples[(perm[i], j)]
    })
}

/// One round of the permutation test for candidate `remaining[t_index]`.
///
/// `samples_t` are the candidate's raw rows; its Gram matrix is rebuilt with
/// `kernel` after every permutation. When the candidate is the last remaining
/// filter the observed CMI is 0 by definition; the candidate is accepted and
/// selection stops.
#[allow(clippy::too_many_arguments)]
pub fn cmi_permutation_step(
    selected: &[GramMatrix],
    remaining: &[GramMatrix],
    labels: &GramMatrix,
    t_index: usize,
    samples_t: &DMatrix<f64>,
    kernel: &KernelSpec,
    cfg: &EntropyConfig,
    test: &PermutationTestConfig,
) -> Result<SelectionResult> {
    test.validate()?;
    if remaining.is_empty() {
        return Err(Error::Empty("remaining filter set"));
    }
    let candidate = remaining.get(t_index).ok_or_else(|| {
        Error::IndexOutOfRange(format!(
            "candidate {t_index} of {} remaining filters",
            remaining.len()
        ))
    })?;
    let n = labels.n();
    if samples_t.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: samples_t.nrows(),
        });
    }

    let rest: Vec<GramMatrix> = remaining
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != t_index)
        .map(|(_, g)| g.clone())
        .collect();

    if rest.is_empty() {
        return Ok(SelectionResult {
            decision: Decision::Stop,
            selected_count: selected.len() + 1,
            p_value: 1.0,
            trace: vec![CandidateTrace {
                candidate: t_index,
                observed: 0.0,
                permuted: Vec::new(),
                p_value: 1.0,
                decision: Decision::Stop,
            }],
        });
    }

    let base = ConditionalBase::new(&rest, labels, selected)?;
    let observed = base.with_candidate(candidate, cfg)?.bits;
    let indices: Vec<u64> = (0..test.permutations as u64).collect();
    let permuted = crate::par::map(&indices, |&i| {
        let perm = permutation(n, test.seed, i);
        let g = gram(&permute_rows(samples_t, &perm), kernel)?;
        Ok(base.with_candidate(&g, cfg)?.bits)
    })?;

    let hits = permuted.iter().filter(|&&p| observed >= p).count();
    let p_value = hits as f64 / test.permutations as f64;
    let decision = if p_value <= test.significance {
        Decision::Continue
    } else {
        Decision::Stop
    };
    let selected_count = match decision {
        Decision::Continue => selected.len() + 1,
        Decision::Stop => selected.len(),
    };
    Ok(SelectionResult {
        decision,
        selected_count,
        p_value,
        trace: vec![CandidateTrace {
            candidate: t_index,
            observed,
            permuted,
            p_value,
            decision,
        }],
    })
}

/// Order in which candidates are offered to the permutation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingRule {
    /// Filters in the order given.
    Given,
    /// Descending `I(T^i; Y)`, ties broken by index.
    LabelInformation,
}

/// A filter's Gram matrix together with the raw rows it was built from.
#[derive(Debug, Clone)]
pub struct Filter {
    pub gram: GramMatrix,
    pub samples: DMatrix<f64>,
}

pub fn rank_filters(
    filters: &[Filter],
    labels: &GramMatrix,
    rule: RankingRule,
    cfg: &EntropyConfig,
) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..filters.len()).collect();
    if rule == RankingRule::LabelInformation {
        let mi = crate::par::map(filters, |f| {
            Ok(mmi(labels, std::slice::from_ref(&f.gram), cfg)?.bits)
        })?;
        order.sort_by(|&a, &b| mi[b].total_cmp(&mi[a]).then(a.cmp(&b)));
    }
    Ok(order)
}

fn candidate_seed(seed: u64, candidate: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (candidate as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Greedy forward selection: accept filters in ranked order until the
/// permutation test says stop. Returns the final decision with the full trace.
pub fn select_filter_count(
    filters: &[Filter],
    labels: &GramMatrix,
    rule: RankingRule,
    kernel: &KernelSpec,
    cfg: &EntropyConfig,
    test: &PermutationTestConfig,
) -> Result<SelectionResult> {
    if filters.is_empty() {
        return Err(Error::Empty("filter list"));
    }
    let order = rank_filters(filters, labels, rule, cfg)?;
    let mut selected: Vec<GramMatrix> = Vec::new();
    let mut trace = Vec::new();

    for (step, &cand) in order.iter().enumerate() {
        let remaining: Vec<GramMatrix> = order[step..]
            .iter()
            .map(|&i| filters[i].gram.clone())
            .collect();
        let step_test = PermutationTestConfig {
            seed: candidate_seed(test.seed, cand),
            ..*test
        };
        let mut res = cmi_permutation_step(
            &selected,
            &remaining,
            labels,
            0,
            &filters[cand].samples,
            kernel,
            cfg,
            &step_test,
        )?;
        for t in res.trace.iter_mut() {
            t.candidate = cand;
        }
        trace.append(&mut res.trace);
        if res.decision == Decision::Stop {
            return Ok(SelectionResult {
                decision: Decision::Stop,
                selected_count: res.selected_count,
                p_value: res.p_value,
                trace,
            });
        }
        selected.push(filters[cand].gram.clone());
    }
    unreachable!("the last candidate always stops selection")
}

/// `I(X;T^i) - β I(T^i;Y)`. Lower means more important.
pub fn ib_score(
    input: &GramMatrix,
    filter: &GramMatrix,
    labels: &GramMatrix,
    beta: f64,
    cfg: &EntropyConfig,
) -> Result<f64> {
    Ok(IbScore::measure(0, input, filter, labels, beta, cfg)?.score)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbScore {
    pub filter: usize,
    pub i_xt: f64,
    pub i_ty: f64,
    pub score: f64,
}

impl IbScore {
    fn measure(
        filter: usize,
        input: &GramMatrix,
        t: &GramMatrix,
        labels: &GramMatrix,
        beta: f64,
        cfg: &EntropyConfig,
    ) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::invalid("beta", "must be finite"));
        }
        let i_xt = mmi(input, std::slice::from_ref(t), cfg)?.bits;
        let i_ty = mmi(labels, std::slice::from_ref(t), cfg)?.bits;
        Ok(Self {
            filter,
            i_xt,
            i_ty,
            score: i_xt - beta * i_ty,
        })
    }
}

/// Scores every filter; the result is sorted by ascending score (most important first).
pub fn rank_by_ib(
    input: &GramMatrix,
    filters: &[GramMatrix],
    labels: &GramMatrix,
    beta: f64,
    cfg: &EntropyConfig,
) -> Result<Vec<IbScore>> {
    let indexed: Vec<(usize, &GramMatrix)> = filters.iter().enumerate().collect();
    let mut scores = crate::par::map(&indexed, |&(i, t)| {
        IbScore::measure(i, input, t, labels, beta, cfg)
    })?;
    scores.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.filter.cmp(&b.filter)));
    Ok(scores)
}
