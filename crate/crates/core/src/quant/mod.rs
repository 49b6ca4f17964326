//! Nearest-code vector quantization, residual stacks and k-means seeding.

pub mod codebook;
pub mod kmeans;
pub mod rvq;

pub use codebook::{nearest_codes, perplexity, Codebook, Quantized};
pub use kmeans::{inertia, kmeans};
pub use rvq::{rvq_quantize, RvqOutput, RvqStack};
