//! Synthetic data with known ground truth, and brute-force oracles.

mod generators;
mod oracle;
mod rng;

pub use generators::{
    gen_dataset, gen_features, gen_linear_dataset, gen_structured_epochs, gen_subject_epochs, SynthCategory,
    SynthDataset, SynthError, SynthSpec,
};
pub use oracle::{rank_oracle, RANK_ORACLE_MAX_LEN};
pub use rng::{derive_seed, splitmix64, StreamRng};
