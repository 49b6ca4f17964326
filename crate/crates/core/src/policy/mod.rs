//! Desk-scale autoregressive token policy used to compare tokenizers.

pub mod dataset;
pub mod fallback;
pub mod model;
pub mod perturb;
pub mod train;

pub use dataset::{PolicyDataset, PolicyExample};
pub use fallback::decode_with_fallback;
pub use model::{PolicyConfig, ToyPolicy};
pub use perturb::{
    perturbation_experiment, perturbation_profile, write_profile_csv, PerturbationPoint,
};
pub use train::{
    evaluate_policy, greedy_recon_l1, train_policy, CurvePoint, EfficiencyCurve, PolicyEval,
};

#[cfg(test)]
mod tests;
