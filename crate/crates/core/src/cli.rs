//! Command-line front end.
//!
//! Every command writes exactly one result (CSV or JSON) to `--out` or stdout.
//! Diagnostics go to stderr as one JSON object per line, and failures end with
//! a JSON error record on stderr and a nonzero exit status.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::chain::{dpi_run, ip_trajectory, Direction, KernelPlan, LayerSelection, Plane};
use crate::entropy::{joint_entropy, matrix_entropy, mmi, saturation_check, EntropyConfig};
use crate::error::Error;
use crate::gram::{gram, GramMatrix, KernelSpec, DEFAULT_H_ERROR, DEFAULT_H_FORWARD};
use crate::pid::{layer_pid, pair_count, PairSamplingPolicy, PidReport, DEFAULT_MAX_PAIRS};
use crate::selection::{
    rank_by_ib, select_filter_count, Filter, PermutationTestConfig, RankingRule,
};
use crate::tensor_io::{load_batch, read_tensor, LayerKind, LayerSnapshot, RunManifest};

const COLUMNS: &str = "\
CSV columns (fixed order):
  entropy, joint-entropy   n,bits
  mmi                      n,bits,negative
  dpi-check                epoch,batch,direction,index,layer,bits,negative,saturated,violation
  pid                      epoch,batch,layer,tradeoff_bits,nonredundant_bits,tradeoff_pct,nonredundant_pct,pairs_evaluated,pairs_skipped
  ip-trajectory            epoch,layer,plane,x_bits,y_bits
  cmi-select               step,candidate,observed,p_value,decision,selected_count
  ib-score                 rank,filter,i_xt,i_ty,score

JSON output mirrors the library report types field for field.
Warnings and errors are written to stderr as one JSON object per line.";

#[derive(Parser, Debug)]
#[command(
    name = "infoplane",
    version,
    about = "Matrix-based Renyi entropy and mutual information for layer activations",
    after_help = COLUMNS
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Entropy of one tensor's normalized Gram matrix.
    #[command(after_help = COLUMNS)]
    Entropy {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Joint entropy of several tensors (Hadamard product of their Grams).
    #[command(after_help = COLUMNS)]
    JointEntropy {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Mutual information between a target tensor and a set of tensors.
    #[command(after_help = COLUMNS)]
    Mmi {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        /// Kernel family for the target; defaults to --kernel.
        #[arg(long, value_enum)]
        target_kernel: Option<KernelFamily>,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Data-processing audit for every dumped batch of a run.
    #[command(after_help = COLUMNS)]
    DpiCheck {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "forward")]
        direction: DirectionArg,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Redundancy/synergy surrogates of each conv layer against the labels.
    #[command(after_help = COLUMNS)]
    Pid {
        #[arg(long)]
        manifest: PathBuf,
        /// Restrict to these layers (repeatable).
        #[arg(long)]
        layer: Vec<String>,
        #[command(flatten)]
        pairs: PairArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Per-epoch information-plane coordinates.
    #[command(after_help = COLUMNS)]
    IpTrajectory {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "ip")]
        plane: PlaneArg,
        /// Restrict to these layers (repeatable).
        #[arg(long)]
        layer: Vec<String>,
        #[command(flatten)]
        pairs: PairArgs,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Number of filters to keep in a layer, by CMI permutation test.
    #[command(after_help = COLUMNS)]
    CmiSelect {
        #[command(flatten)]
        target: LayerTarget,
        #[arg(long, value_enum, default_value = "label-information")]
        ranking: RankingArg,
        /// Number of permutations.
        #[arg(long = "P", default_value_t = 100)]
        permutations: usize,
        #[arg(long, default_value_t = 0.05)]
        significance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Information-bottleneck scores of a layer's filters, most important first.
    #[command(after_help = COLUMNS)]
    IbScore {
        #[command(flatten)]
        target: LayerTarget,
        #[arg(long, default_value_t = 2.0)]
        beta: f64,
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 1.01)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct KernelArgs {
    /// Kernel for activations and inputs. Labels always use the delta kernel.
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: KernelFamily,
    /// Silverman scale for forward tensors [default: 5].
    #[arg(long = "h", conflicts_with = "sigma")]
    pub h: Option<f64>,
    /// Fixed RBF width for forward tensors.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Silverman scale for error signals.
    #[arg(long, default_value_t = DEFAULT_H_ERROR)]
    pub h_error: f64,
}

#[derive(Args, Debug, Clone)]
pub struct PairArgs {
    /// Pair policy; exhaustive up to --pair-count pairs and random beyond when omitted.
    /// A --pair-count above the available pairs is capped.
    #[arg(long, value_enum)]
    pub pairs: Option<PairMode>,
    #[arg(long, default_value_t = DEFAULT_MAX_PAIRS)]
    pub pair_count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct LayerTarget {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub layer: String,
    /// 0-based position of the epoch in the manifest.
    #[arg(long, default_value_t = 0)]
    pub epoch: usize,
    /// 0-based position of the batch within the epoch.
    #[arg(long, default_value_t = 0)]
    pub batch: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Rbf,
    Delta,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionArg {
    Forward,
    Error,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneArg {
    Ip,
    Mip,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    Exhaustive,
    Random,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankingArg {
    Given,
    LabelInformation,
}

impl KernelArgs {
    fn forward(&self) -> KernelSpec {
        self.family(self.kernel)
    }

    fn family(&self, family: KernelFamily) -> KernelSpec {
        match (family, self.sigma) {
            (KernelFamily::Delta, _) => KernelSpec::LabelDelta,
            (KernelFamily::Rbf, Some(sigma)) => KernelSpec::rbf_fixed(sigma),
            (KernelFamily::Rbf, None) => {
                KernelSpec::rbf_silverman(self.h.unwrap_or(DEFAULT_H_FORWARD))
            }
        }
    }

    fn plan(&self) -> KernelPlan {
        KernelPlan {
            forward: self.forward(),
            error: KernelSpec::rbf_silverman(self.h_error),
            labels: KernelSpec::LabelDelta,
        }
    }
}

impl PairArgs {
    /// A pair count above the number of available pairs samples all of them.
    fn policy(&self, c: usize) -> PairSamplingPolicy {
        let random = PairSamplingPolicy::Random {
            k: self.pair_count.min(pair_count(c)),
            seed: self.seed,
        };
        match self.pairs {
            Some(PairMode::Exhaustive) => PairSamplingPolicy::Exhaustive,
            Some(PairMode::Random) => random,
            None if pair_count(c) <= self.pair_count => PairSamplingPolicy::Exhaustive,
            None => random,
        }
    }
}

/// Non-fatal diagnostic, printed to stderr as `{"warning": kind, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Warning {
    pub warning: &'static str,
    pub message: String,
}

/// Result of a successful command before it is written anywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub out: Option<PathBuf>,
    pub warnings: Vec<Warning>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(clap::Error),
    Run(Error),
}

impl CliError {
    pub fn record(&self) -> String {
        let (kind, message) = match self {
            CliError::Usage(e) => ("usage", e.to_string().trim().to_string()),
            CliError::Run(e) => (e.kind(), e.to_string()),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

/// Parses and runs one command, returning its output without touching stdout.
pub fn execute<I, T>(argv: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(CliError::Usage)?;
    dispatch(cli.command).map_err(CliError::Run)
}

/// Entry point used by the binary. Returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stderr = std::io::stderr();
    match execute(argv) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                let _ = writeln!(
                    stderr.lock(),
                    "{}",
                    serde_json::to_string(w).unwrap_or_default()
                );
            }
            match write_output(&outcome) {
                Ok(()) => 0,
                Err(e) => {
                    let e = CliError::Run(e);
                    let _ = writeln!(stderr.lock(), "{}", e.record());
                    e.exit_code()
                }
            }
        }
        Err(CliError::Usage(e))
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = e.print();
            0
        }
        Err(e) => {
            let _ = writeln!(stderr.lock(), "{}", e.record());
            e.exit_code()
        }
    }
}

fn write_output(outcome: &Outcome) -> crate::Result<()> {
    match &outcome.out {
        Some(path) => std::fs::write(path, &outcome.output).map_err(|e| Error::io(path, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(outcome.output.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn dispatch(command: Command) -> crate::Result<Outcome> {
    match command {
        Command::Entropy {
            input,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let g = tensor_gram(&input, &kernel.forward())?;
            let v = matrix_entropy(&g, &cfg)?;
            let table = Table::new(&["n", "bits"]).row(vec![v.n.to_string(), fmt(v.bits)]);
            finish(&common, &v, table, Vec::new())
        }
        Command::JointEntropy {
            input,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let grams = tensor_grams(&input, &kernel.forward())?;
            let warnings = saturation_warning(&grams, &cfg, "joint of --input tensors")?;
            let v = joint_entropy(&grams, &cfg)?;
            let table = Table::new(&["n", "bits"]).row(vec![v.n.to_string(), fmt(v.bits)]);
            finish(&common, &v, table, warnings)
        }
        Command::Mmi {
            target,
            input,
            target_kernel,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let b = tensor_gram(
                &target,
                &kernel.family(target_kernel.unwrap_or(kernel.kernel)),
            )?;
            let grams = tensor_grams(&input, &kernel.forward())?;
            let warnings = saturation_warning(&grams, &cfg, "joint of --input tensors")?;
            let v = mmi(&b, &grams, &cfg)?;
            let table = Table::new(&["n", "bits", "negative"]).row(vec![
                v.n.to_string(),
                fmt(v.bits),
                v.negative.to_string(),
            ]);
            finish(&common, &v, table, warnings)
        }
        Command::DpiCheck {
            manifest,
            direction,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let manifest = RunManifest::load(&manifest)?;
            let direction = match direction {
                DirectionArg::Forward => Direction::Forward,
                DirectionArg::Error => Direction::Error,
            };
            let runs = dpi_run(&manifest, direction, &kernel.plan(), &cfg)?;
            let mut table = Table::new(&[
                "epoch",
                "batch",
                "direction",
                "index",
                "layer",
                "bits",
                "negative",
                "saturated",
                "violation",
            ]);
            let mut warnings = Vec::new();
            for run in &runs {
                for (i, v) in run.report.values.iter().enumerate() {
                    if v.saturated {
                        warnings.push(saturated(format!(
                            "epoch {} batch {} layer {}",
                            run.epoch, run.batch, v.layer
                        )));
                    }
                    table = table.row(vec![
                        run.epoch.to_string(),
                        run.batch.to_string(),
                        direction.as_str().to_string(),
                        i.to_string(),
                        v.layer.clone(),
                        fmt(v.bits),
                        v.negative.to_string(),
                        v.saturated.to_string(),
                        run.report.is_violation(i).to_string(),
                    ]);
                }
            }
            finish(&common, &runs, table, warnings)
        }
        Command::Pid {
            manifest,
            layer,
            pairs,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let manifest = RunManifest::load(&manifest)?;
            let plan = kernel.plan();
            let mut rows = Vec::new();
            let mut matched = false;
            for (ei, epoch) in manifest.epochs.iter().enumerate() {
                for (bi, entry) in epoch.batches.iter().enumerate() {
                    let data = load_batch(&manifest, ei, bi)?;
                    let labels = gram(&data.labels.matrices[0], &plan.labels)?;
                    for snap in &data.layers {
                        let named = layer.contains(&snap.name);
                        if !layer.is_empty() && !named {
                            continue;
                        }
                        matched |= named;
                        // Without an explicit selection, layers that cannot be paired are skipped.
                        if layer.is_empty()
                            && (snap.kind == LayerKind::Fc || snap.matrices.len() < 2)
                        {
                            continue;
                        }
                        let grams = snap_grams(snap, &plan.forward)?;
                        let report = layer_pid(
                            &snap.name,
                            &labels,
                            &grams,
                            &pairs.policy(grams.len()),
                            &cfg,
                        )?;
                        rows.push(PidRow {
                            epoch: epoch.epoch,
                            batch: entry.batch,
                            report,
                        });
                    }
                }
            }
            if !layer.is_empty() && !matched {
                return Err(Error::invalid(
                    "layers",
                    "selection matches no layer in the manifest",
                ));
            }
            let mut table = Table::new(&[
                "epoch",
                "batch",
                "layer",
                "tradeoff_bits",
                "nonredundant_bits",
                "tradeoff_pct",
                "nonredundant_pct",
                "pairs_evaluated",
                "pairs_skipped",
            ]);
            for r in &rows {
                let p = &r.report;
                table = table.row(vec![
                    r.epoch.to_string(),
                    r.batch.to_string(),
                    p.layer.clone(),
                    fmt(p.tradeoff_bits),
                    fmt(p.nonredundant_bits),
                    p.tradeoff_pct.map(fmt).unwrap_or_default(),
                    p.nonredundant_pct.map(fmt).unwrap_or_default(),
                    p.pairs_evaluated.to_string(),
                    p.pairs_skipped.to_string(),
                ]);
            }
            finish(&common, &rows, table, Vec::new())
        }
        Command::IpTrajectory {
            manifest,
            plane,
            layer,
            pairs,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let manifest = RunManifest::load(&manifest)?;
            let plane = match plane {
                PlaneArg::Ip => Plane::Ip,
                PlaneArg::Mip => Plane::Mip,
            };
            let selection = if layer.is_empty() {
                LayerSelection::All
            } else {
                LayerSelection::Named(layer)
            };
            let traj = ip_trajectory(&manifest, plane, &selection, &kernel.plan(), &cfg, |c| {
                pairs.policy(c)
            })?;
            let mut warnings: Vec<Warning> = traj
                .skipped
                .iter()
                .map(|s| Warning {
                    warning: "skipped_layer",
                    message: format!("{}: {}", s.layer, s.reason),
                })
                .collect();
            warnings.extend(traj.saturated.iter().map(|s| {
                saturated(format!(
                    "epoch {} batch {} layer {} (mean off-diagonal {})",
                    s.epoch,
                    s.batch,
                    s.layer,
                    fmt(s.mean_off_diagonal)
                ))
            }));
            let mut table = Table::new(&["epoch", "layer", "plane", "x_bits", "y_bits"]);
            for p in &traj.points {
                table = table.row(vec![
                    p.epoch.to_string(),
                    p.layer.clone(),
                    p.plane.as_str().to_string(),
                    fmt(p.x_bits),
                    fmt(p.y_bits),
                ]);
            }
            finish(&common, &traj, table, warnings)
        }
        Command::CmiSelect {
            target,
            ranking,
            permutations,
            significance,
            seed,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let plan = kernel.plan();
            let (_, labels, filters) = layer_filters(&target, &plan)?;
            let rule = match ranking {
                RankingArg::Given => RankingRule::Given,
                RankingArg::LabelInformation => RankingRule::LabelInformation,
            };
            let test = PermutationTestConfig {
                permutations,
                significance,
                seed,
            };
            let res = select_filter_count(&filters, &labels, rule, &plan.forward, &cfg, &test)?;
            let mut table = Table::new(&[
                "step",
                "candidate",
                "observed",
                "p_value",
                "decision",
                "selected_count",
            ]);
            for (step, t) in res.trace.iter().enumerate() {
                table = table.row(vec![
                    step.to_string(),
                    t.candidate.to_string(),
                    fmt(t.observed),
                    fmt(t.p_value),
                    decision_str(t.decision).to_string(),
                    res.selected_count.to_string(),
                ]);
            }
            finish(&common, &res, table, Vec::new())
        }
        Command::IbScore {
            target,
            beta,
            kernel,
            common,
        } => {
            let cfg = EntropyConfig::with_alpha(common.alpha)?;
            let plan = kernel.plan();
            let (input, labels, filters) = layer_filters(&target, &plan)?;
            let grams: Vec<GramMatrix> = filters.into_iter().map(|f| f.gram).collect();
            let scores = rank_by_ib(&input, &grams, &labels, beta, &cfg)?;
            let mut table = Table::new(&["rank", "filter", "i_xt", "i_ty", "score"]);
            for (rank, s) in scores.iter().enumerate() {
                table = table.row(vec![
                    rank.to_string(),
                    s.filter.to_string(),
                    fmt(s.i_xt),
                    fmt(s.i_ty),
                    fmt(s.score),
                ]);
            }
            finish(&common, &scores, table, Vec::new())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PidRow {
    epoch: usize,
    batch: usize,
    report: PidReport,
}

fn decision_str(d: crate::selection::Decision) -> &'static str {
    match d {
        crate::selection::Decision::Continue => "continue",
        crate::selection::Decision::Stop => "stop",
    }
}

fn tensor_gram(path: &Path, kernel: &KernelSpec) -> crate::Result<GramMatrix> {
    gram(&read_tensor(path)?, kernel)
}

fn tensor_grams(paths: &[PathBuf], kernel: &KernelSpec) -> crate::Result<Vec<GramMatrix>> {
    paths.iter().map(|p| tensor_gram(p, kernel)).collect()
}

fn snap_grams(snap: &LayerSnapshot, kernel: &KernelSpec) -> crate::Result<Vec<GramMatrix>> {
    snap.matrices.iter().map(|m| gram(m, kernel)).collect()
}

/// Input Gram, label Gram and per-filter data for one layer of one batch.
/// A fully connected layer is split into one filter per unit.
fn layer_filters(
    target: &LayerTarget,
    plan: &KernelPlan,
) -> crate::Result<(GramMatrix, GramMatrix, Vec<Filter>)> {
    let manifest = RunManifest::load(&target.manifest)?;
    manifest.batch_entry(target.epoch, target.batch)?;
    let data = load_batch(&manifest, target.epoch, target.batch)?;
    let snap = data
        .layers
        .iter()
        .find(|l| l.name == target.layer)
        .ok_or_else(|| Error::invalid("layer", format!("no layer named {:?}", target.layer)))?;
    let samples: Vec<DMatrix<f64>> = match snap.kind {
        LayerKind::Conv => snap.matrices.clone(),
        LayerKind::Fc => {
            let m = &snap.matrices[0];
            (0..m.ncols())
                .map(|j| m.columns(j, 1).into_owned())
                .collect()
        }
    };
    let filters = samples
        .into_iter()
        .map(|s| {
            Ok(Filter {
                gram: gram(&s, &plan.forward)?,
                samples: s,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let input = gram(&data.input.matrices[0], &plan.forward)?;
    let labels = gram(&data.labels.matrices[0], &plan.labels)?;
    Ok((input, labels, filters))
}

fn saturation_warning(
    grams: &[GramMatrix],
    cfg: &EntropyConfig,
    what: &str,
) -> crate::Result<Vec<Warning>> {
    let s = saturation_check(grams, cfg.saturation_epsilon)?;
    Ok(if s.is_saturated() {
        vec![saturated(format!(
            "{what} (mean off-diagonal {})",
            fmt(s.mean_off_diagonal())
        ))]
    } else {
        Vec::new()
    })
}

fn saturated(context: String) -> Warning {
    Warning {
        warning: "saturation",
        message: format!("Hadamard product collapsed towards I/n: {context}"),
    }
}

/// Shortest representation that round-trips.
fn fmt(x: f64) -> String {
    format!("{x:?}")
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn row(mut self, r: Vec<String>) -> Self {
        debug_assert_eq!(r.len(), self.header.len());
        self.rows.push(r);
        self
    }

    fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // Writing into memory cannot fail.
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

fn finish<T: Serialize>(
    common: &CommonArgs,
    report: &T,
    table: Table,
    warnings: Vec<Warning>,
) -> crate::Result<Outcome> {
    let output = match common.format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report)
                .map_err(|e| Error::invalid("format", e.to_string()))?;
            s.push('\n');
            s
        }
    };
    Ok(Outcome {
        output,
        out: common.out.clone(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::{write_tensor, Dtype};

    fn s(args: &[&str]) -> Vec<String> {
        std::iter::once("infoplane")
            .chain(args.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn sigma_conflicts_with_h() {
        let e = execute(s(&[
            "entropy", "--input", "x.npy", "--h", "2", "--sigma", "1",
        ]))
        .unwrap_err();
        assert!(matches!(e, CliError::Usage(_)));
        assert_eq!(e.exit_code(), 2);
        assert!(e.record().contains("\"error\":\"usage\""));
    }

    #[test]
    fn unknown_flag_is_rejected() {
        let e = execute(s(&["entropy", "--input", "x.npy", "--bogus"])).unwrap_err();
        assert!(matches!(e, CliError::Usage(_)));
    }

    #[test]
    fn missing_file_gives_io_record() {
        let e = execute(s(&["entropy", "--input", "/nonexistent/x.npy"])).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        let v: serde_json::Value = serde_json::from_str(&e.record()).unwrap();
        assert_eq!(v["error"], "io");
    }

    #[test]
    fn delta_entropy_of_distinct_rows_is_log2_n() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.npy");
        write_tensor(&p, &DMatrix::from_fn(8, 1, |i, _| i as f64), Dtype::Float64).unwrap();
        let o = execute(s(&[
            "entropy",
            "--input",
            p.to_str().unwrap(),
            "--kernel",
            "delta",
        ]))
        .unwrap();
        assert_eq!(o.output, "n,bits\n8,3.0\n");
    }

    #[test]
    fn kernel_args_resolve() {
        let k = KernelArgs {
            kernel: KernelFamily::Rbf,
            h: None,
            sigma: Some(0.5),
            h_error: 0.1,
        };
        assert_eq!(k.forward(), KernelSpec::rbf_fixed(0.5));
        assert_eq!(k.plan().error, KernelSpec::rbf_silverman(0.1));
        assert_eq!(k.family(KernelFamily::Delta), KernelSpec::LabelDelta);
        let k = KernelArgs { sigma: None, ..k };
        assert_eq!(k.forward(), KernelSpec::rbf_silverman(5.0));
    }

    #[test]
    fn pair_policy_defaults() {
        let p = PairArgs {
            pairs: None,
            pair_count: 10,
            seed: 3,
        };
        assert_eq!(p.policy(5), PairSamplingPolicy::Exhaustive);
        assert_eq!(p.policy(6), PairSamplingPolicy::Random { k: 10, seed: 3 });
        let p = PairArgs {
            pairs: Some(PairMode::Random),
            ..p
        };
        assert_eq!(p.policy(3), PairSamplingPolicy::Random { k: 3, seed: 3 });
    }

    #[test]
    fn help_lists_columns() {
        let e = execute(s(&["--help"])).unwrap_err();
        match e {
            CliError::Usage(e) => {
                assert!(e.to_string().contains("epoch,layer,plane,x_bits,y_bits"))
            }
            _ => panic!(),
        }
    }
}
