//! Matrix-based Rényi entropy, multivariate mutual information and the layer
//! analyses built on them (data-processing audits, pairwise synergy/redundancy
//! surrogates, information-plane trajectories, filter selection and scoring).

pub mod chain;
#[cfg(feature = "cli")]
pub mod cli;
pub mod entropy;
pub mod error;
pub mod gram;
mod par;
pub mod pid;
pub mod selection;
pub mod tensor_io;

#[cfg(test)]
mod testutil;

pub use chain::{
    dpi_error, dpi_forward, ip_trajectory, ChainReport, Direction, IpPoint, KernelPlan, Plane,
};
pub use entropy::{
    cmi, joint_entropy, matrix_entropy, mmi, saturation_check, EntropyConfig, EntropyValue,
    MutualInfo, Saturation,
};
pub use error::{Error, Result};
pub use gram::{gram, label_gram, silverman_sigma, Bandwidth, GramMatrix, KernelSpec};
pub use pid::{layer_pid, nonredundant, tradeoff, PairSamplingPolicy, PidReport};
pub use selection::{
    cmi_permutation_step, ib_score, select_filter_count, Decision, PermutationTestConfig,
    SelectionResult,
};
