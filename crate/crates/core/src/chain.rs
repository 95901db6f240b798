//! Data-processing audits along layer chains and information-plane trajectories.

use serde::{Deserialize, Serialize};

use crate::entropy::{mmi, saturation_check, EntropyConfig};
use crate::error::{Error, Result};
use crate::gram::{gram, GramMatrix, KernelSpec, DEFAULT_H_ERROR, DEFAULT_H_FORWARD};
use crate::pid::{layer_pid, PairSamplingPolicy};
use crate::tensor_io::{load_batch, BatchData, LayerKind, LayerSnapshot, RunManifest};

/// Chain increases larger than this count as violations.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `I(X;T_1) >= I(X;T_2) >= ...`, input side first.
    Forward,
    /// `I(δ_K;δ_{K-1}) >= I(δ_K;δ_{K-2}) >= ...`, output side first.
    Error,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Error => "error",
        }
    }
}

/// Kernels used to turn a batch of tensors into Gram matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPlan {
    /// Input and activations.
    pub forward: KernelSpec,
    /// Error signals.
    pub error: KernelSpec,
    pub labels: KernelSpec,
}

impl Default for KernelPlan {
    fn default() -> Self {
        Self {
            forward: KernelSpec::rbf_silverman(DEFAULT_H_FORWARD),
            error: KernelSpec::rbf_silverman(DEFAULT_H_ERROR),
            labels: KernelSpec::LabelDelta,
        }
    }
}

/// The Gram matrices of one layer: one per feature map, or one for fc layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GramGroup {
    pub name: String,
    pub kind: LayerKind,
    pub grams: Vec<GramMatrix>,
}

impl GramGroup {
    pub fn from_snapshot(snapshot: &LayerSnapshot, kernel: &KernelSpec) -> Result<Self> {
        Ok(Self {
            name: snapshot.name.clone(),
            kind: snapshot.kind,
            grams: crate::par::map(&snapshot.matrices, |m| gram(m, kernel))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BatchGrams {
    pub input: GramMatrix,
    pub labels: GramMatrix,
    pub layers: Vec<GramGroup>,
    /// Output side first.
    pub errors: Vec<GramGroup>,
}

impl BatchGrams {
    pub fn build(data: &BatchData, plan: &KernelPlan) -> Result<Self> {
        let layers = data
            .layers
            .iter()
            .map(|l| GramGroup::from_snapshot(l, &plan.forward))
            .collect::<Result<Vec<_>>>()?;
        let errors = data
            .errors
            .iter()
            .map(|l| GramGroup::from_snapshot(l, &plan.error))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            input: gram(&data.input.matrices[0], &plan.forward)?,
            labels: gram(&data.labels.matrices[0], &plan.labels)?,
            layers,
            errors,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainValue {
    pub layer: String,
    pub bits: f64,
    /// Set when the estimate came out negative beyond round-off.
    pub negative: bool,
    /// Set when the layer's joint Hadamard product has collapsed towards `I/n`.
    pub saturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub from: usize,
    pub to: usize,
    pub increase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub direction: Direction,
    pub values: Vec<ChainValue>,
    pub violations: Vec<Violation>,
    /// Violations over adjacent pairs; 0 for a single-element chain.
    pub violation_fraction: f64,
}

impl ChainReport {
    pub fn is_violation(&self, index: usize) -> bool {
        self.violations.iter().any(|v| v.to == index)
    }
}

/// Flags every adjacent increase of a chain that should be non-increasing.
pub fn audit_chain(direction: Direction, values: Vec<ChainValue>) -> ChainReport {
    let violations: Vec<Violation> = values
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| {
            let increase = w[1].bits - w[0].bits;
            (increase > VIOLATION_TOL).then_some(Violation {
                from: k,
                to: k + 1,
                increase,
            })
        })
        .collect();
    let pairs = values.len().saturating_sub(1);
    let violation_fraction = if pairs == 0 {
        0.0
    } else {
        violations.len() as f64 / pairs as f64
    };
    ChainReport {
        direction,
        values,
        violations,
        violation_fraction,
    }
}

fn chain_against(
    direction: Direction,
    reference: &GramMatrix,
    groups: &[GramGroup],
    cfg: &EntropyConfig,
) -> Result<ChainReport> {
    let values = crate::par::map(groups, |g| {
        let i = mmi(reference, &g.grams, cfg)?;
        Ok(ChainValue {
            layer: g.name.clone(),
            bits: i.bits,
            negative: i.negative,
            saturated: saturation_check(&g.grams, cfg.saturation_epsilon)?.is_saturated(),
        })
    })?;
    Ok(audit_chain(direction, values))
}

/// `I(X; T_k)` for each layer, input side first.
pub fn dpi_forward(
    input: &GramMatrix,
    layers: &[GramGroup],
    cfg: &EntropyConfig,
) -> Result<ChainReport> {
    if layers.len() < 2 {
        return Err(Error::invalid(
            "layers",
            format!(
                "a forward chain needs at least 2 layers, got {}",
                layers.len()
            ),
        ));
    }
    chain_against(Direction::Forward, input, layers, cfg)
}

/// `I(δ_K; δ_k)` for each earlier error signal, output side first.
pub fn dpi_error(
    delta_out: &GramMatrix,
    errors: &[GramGroup],
    cfg: &EntropyConfig,
) -> Result<ChainReport> {
    if errors.is_empty() {
        return Err(Error::Empty("error chain"));
    }
    chain_against(Direction::Error, delta_out, errors, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchChain {
    pub epoch: usize,
    pub batch: usize,
    pub report: ChainReport,
}

/// Runs the chosen audit on every dumped batch of a run.
pub fn dpi_run(
    manifest: &RunManifest,
    direction: Direction,
    plan: &KernelPlan,
    cfg: &EntropyConfig,
) -> Result<Vec<BatchChain>> {
    let mut out = Vec::new();
    for (ei, epoch) in manifest.epochs.iter().enumerate() {
        for (bi, entry) in epoch.batches.iter().enumerate() {
            let grams = BatchGrams::build(&load_batch(manifest, ei, bi)?, plan)?;
            let report = match direction {
                Direction::Forward => dpi_forward(&grams.input, &grams.layers, cfg)?,
                Direction::Error => {
                    let (out_layer, rest) = grams.errors.split_first().ok_or_else(|| {
                        Error::Manifest(format!(
                            "epoch {} batch {} has no error signals",
                            epoch.epoch, entry.batch
                        ))
                    })?;
                    if out_layer.grams.len() != 1 {
                        return Err(Error::Manifest(
                            "output error signal must be a single tensor".into(),
                        ));
                    }
                    dpi_error(&out_layer.grams[0], rest, cfg)?
                }
            };
            out.push(BatchChain {
                epoch: epoch.epoch,
                batch: entry.batch,
                report,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Information plane

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    /// `(I(X;T), I(T;Y))`
    Ip,
    /// Both axes replaced by the pair-averaged weighted non-redundant information.
    Mip,
}

impl Plane {
    pub fn as_str(&self) -> &'static str {
        match self {
            Plane::Ip => "ip",
            Plane::Mip => "mip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpPoint {
    pub layer: String,
    pub epoch: usize,
    pub x_bits: f64,
    pub y_bits: f64,
    pub plane: Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedLayer {
    pub layer: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IpTrajectory {
    pub points: Vec<IpPoint>,
    pub skipped: Vec<SkippedLayer>,
    /// Batches whose full-layer Hadamard product saturated (`ip` plane only).
    pub saturated: Vec<SaturatedBatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturatedBatch {
    pub layer: String,
    pub epoch: usize,
    pub batch: usize,
    pub mean_off_diagonal: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSelection {
    All,
    Named(Vec<String>),
}

impl LayerSelection {
    fn contains(&self, name: &str) -> bool {
        match self {
            LayerSelection::All => true,
            LayerSelection::Named(names) => names.iter().any(|n| n == name),
        }
    }
}

/// One point per (epoch, selected layer), averaged over that epoch's batches.
///
/// `policy_for` picks the pair sampling for a layer with the given number of
/// feature maps; it is only consulted on the `mip` plane.
pub fn ip_trajectory<F>(
    manifest: &RunManifest,
    plane: Plane,
    selection: &LayerSelection,
    plan: &KernelPlan,
    cfg: &EntropyConfig,
    policy_for: F,
) -> Result<IpTrajectory>
where
    F: Fn(usize) -> PairSamplingPolicy,
{
    if let LayerSelection::Named(names) = selection {
        if names.is_empty() {
            return Err(Error::Empty("layer selection"));
        }
    }
    let mut traj = IpTrajectory::default();
    let mut matched_any = false;

    for (ei, epoch) in manifest.epochs.iter().enumerate() {
        // (layer name, sum x, sum y, batches)
        let mut acc: Vec<(String, f64, f64, usize)> = Vec::new();
        for bi in 0..epoch.batches.len() {
            let data = load_batch(manifest, ei, bi)?;
            let input = gram(&data.input.matrices[0], &plan.forward)?;
            let labels = gram(&data.labels.matrices[0], &plan.labels)?;
            for layer in data.layers.iter().filter(|l| selection.contains(&l.name)) {
                matched_any = true;
                let c = layer.matrices.len();
                if plane == Plane::Mip && (layer.kind == LayerKind::Fc || c < 2) {
                    if ei == 0 && bi == 0 {
                        let reason = if layer.kind == LayerKind::Fc {
                            "fully connected layer has no feature-map pairs".to_string()
                        } else {
                            format!("conv layer has {c} feature map(s); need at least 2")
                        };
                        traj.skipped.push(SkippedLayer {
                            layer: layer.name.clone(),
                            reason,
                        });
                    }
                    continue;
                }
                let group = GramGroup::from_snapshot(layer, &plan.forward)?;
                if plane == Plane::Ip {
                    let sat = saturation_check(&group.grams, cfg.saturation_epsilon)?;
                    if sat.is_saturated() {
                        traj.saturated.push(SaturatedBatch {
                            layer: layer.name.clone(),
                            epoch: epoch.epoch,
                            batch: epoch.batches[bi].batch,
                            mean_off_diagonal: sat.mean_off_diagonal(),
                        });
                    }
                }
                let (x, y) = match plane {
                    Plane::Ip => (
                        mmi(&input, &group.grams, cfg)?.bits,
                        mmi(&labels, &group.grams, cfg)?.bits,
                    ),
                    Plane::Mip => {
                        let policy = policy_for(c);
                        (
                            layer_pid(&layer.name, &input, &group.grams, &policy, cfg)?
                                .nonredundant_bits,
                            layer_pid(&layer.name, &labels, &group.grams, &policy, cfg)?
                                .nonredundant_bits,
                        )
                    }
                };
                match acc.iter_mut().find(|a| a.0 == layer.name) {
                    Some(a) => {
                        a.1 += x;
                        a.2 += y;
                        a.3 += 1;
                    }
                    None => acc.push((layer.name.clone(), x, y, 1)),
                }
            }
        }
        for (layer, sx, sy, k) in acc {
            traj.points.push(IpPoint {
                layer,
                epoch: epoch.epoch,
                x_bits: sx / k as f64,
                y_bits: sy / k as f64,
                plane,
            });
        }
    }
    if !matched_any {
        return Err(Error::invalid(
            "layers",
            "selection matches no layer in the manifest",
        ));
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_samples;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn values(v: &[f64]) -> Vec<ChainValue> {
        v.iter()
            .enumerate()
            .map(|(i, &bits)| ChainValue {
                layer: format!("l{i}"),
                bits,
                negative: false,
                saturated: false,
            })
            .collect()
    }

    #[test]
    fn monotone_chain_has_no_violations() {
        let r = audit_chain(Direction::Forward, values(&[3.0, 2.0, 1.0]));
        assert!(r.violations.is_empty());
        assert_eq!(r.violation_fraction, 0.0);
    }

    #[test]
    fn increase_is_a_violation() {
        let r = audit_chain(Direction::Forward, values(&[1.0, 2.0]));
        assert_eq!(r.violations.len(), 1);
        assert_eq!((r.violations[0].from, r.violations[0].to), (0, 1));
        assert_abs_diff_eq!(r.violations[0].increase, 1.0);
        assert_eq!(r.violation_fraction, 1.0);
        assert!(r.is_violation(1));
    }

    #[test]
    fn reversed_chain_violates_everywhere() {
        let r = audit_chain(Direction::Error, values(&[0.5, 1.0, 1.5, 2.0]));
        assert_eq!(r.violations.len(), 3);
        assert_eq!(r.violation_fraction, 1.0);
    }

    #[test]
    fn equal_values_are_not_violations() {
        let r = audit_chain(Direction::Forward, values(&[1.0, 1.0 + 1e-12, 1.0]));
        assert!(r.violations.is_empty());
    }

    #[test]
    fn identical_error_signal_carries_full_entropy() {
        let n = 16;
        let d = GramMatrix::uniform_diagonal(n);
        let group = GramGroup {
            name: "delta_1".into(),
            kind: LayerKind::Fc,
            grams: vec![d.clone()],
        };
        let r = dpi_error(&d, &[group], &EntropyConfig::default()).unwrap();
        assert_abs_diff_eq!(r.values[0].bits, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_needs_two_layers() {
        let d = GramMatrix::uniform_diagonal(4);
        let g = GramGroup {
            name: "a".into(),
            kind: LayerKind::Fc,
            grams: vec![d.clone()],
        };
        assert!(dpi_forward(&d, &[g], &EntropyConfig::default()).is_err());
    }

    /// Class-id coarse-graining chain: each level merges classes of the previous one.
    pub(crate) fn coarse_chain<R: Rng>(
        rng: &mut R,
        n: usize,
        levels: &[i64],
    ) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let fine: Vec<i64> = (0..n).map(|_| rng.gen_range(0..levels[0])).collect();
        let x = DMatrix::from_iterator(n, 1, fine.iter().map(|&v| v as f64));
        let chain = levels
            .iter()
            .map(|&k| {
                let ratio = levels[0] / k;
                DMatrix::from_iterator(n, 1, fine.iter().map(|&v| (v / ratio) as f64))
            })
            .collect();
        (x, chain)
    }

    #[test]
    fn coarse_grained_markov_chain_respects_dpi() {
        let n = 64;
        let cfg = EntropyConfig::default();
        let mut violations = 0usize;
        let mut pairs = 0usize;
        for trial in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let (x, chain) = coarse_chain(&mut rng, n, &[32, 16, 8, 4, 2]);
            let b = gram(&x, &KernelSpec::LabelDelta).unwrap();
            let groups: Vec<GramGroup> = chain
                .iter()
                .enumerate()
                .map(|(i, m)| GramGroup {
                    name: format!("t{i}"),
                    kind: LayerKind::Fc,
                    grams: vec![gram(m, &KernelSpec::LabelDelta).unwrap()],
                })
                .collect();
            let r = dpi_forward(&b, &groups, &cfg).unwrap();
            violations += r.violations.len();
            pairs += groups.len() - 1;
        }
        assert!(violations as f64 / pairs as f64 <= 0.1);
    }

    #[test]
    fn continuous_coarse_graining_respects_dpi() {
        // Nested dyadic grids: each level is a deterministic function of the previous one.
        let n = 64;
        let cfg = EntropyConfig::default();
        let kernel = KernelSpec::rbf_fixed(0.5);
        let mut violations = 0usize;
        let mut pairs = 0usize;
        for trial in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let x = random_samples(&mut rng, n, 2) * 4.0;
            let b = gram(&x, &kernel).unwrap();
            let groups: Vec<GramGroup> = [0.25, 1.0, 2.0, 4.0]
                .iter()
                .map(|&step| GramGroup {
                    name: format!("q{step}"),
                    kind: LayerKind::Fc,
                    grams: vec![gram(&x.map(|v| (v / step).floor() * step), &kernel).unwrap()],
                })
                .collect();
            let r = dpi_forward(&b, &groups, &cfg).unwrap();
            violations += r.violations.len();
            pairs += groups.len() - 1;
        }
        assert!(
            violations as f64 / pairs as f64 <= 0.1,
            "{violations}/{pairs}"
        );
    }
}
