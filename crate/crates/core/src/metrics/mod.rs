//! Token diagnostics.

pub mod artifact;
pub mod info;
pub mod overlap;
pub mod recon;
pub mod throughput;

pub use artifact::{artifact_entropy, bootstrap_se, perturbed_tokens, positional_entropy};
pub use info::{
    capacity_bound, corpus_entropy, entropy_identities, nll_decomposition, CorpusEntropy,
    InfoReport, NllDecomposition,
};
pub use overlap::{overlap_rate, overlap_rate_tokens, OrReport};
pub use recon::{recon_error, Norm};
pub use throughput::{throughput_latency, ThroughputReport};
