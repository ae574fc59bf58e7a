//! Input builders shared by the criterion benches.

use std::time::Duration;

use criterion::Criterion;
use neuralign::nalgebra::DMatrix;
use neuralign::StreamRng;

pub fn random_matrix(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = StreamRng::new(seed);
    DMatrix::from_fn(n, d, |_, _| rng.normal())
}

/// `(X, Y)` with a linear signal of unit variance plus unit noise.
pub fn regression_problem(n: usize, d_in: usize, d_out: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (x, y, _) = neuralign::synth::gen_linear_dataset(n, d_in, d_out, 1.0, seed);
    (x, y)
}

/// A vector with many ties, as rank metrics see on RDM upper triangles.
pub fn tied_vector(n: usize, levels: usize, seed: u64) -> Vec<f64> {
    let mut rng = StreamRng::new(seed);
    (0..n).map(|_| rng.below(levels) as f64).collect()
}

pub fn criterion_config() -> Criterion {
    Criterion::default()
        .configure_from_args()
        .warm_up_time(Duration::from_secs(1))
        .measurement_time(Duration::from_secs(5))
        .sample_size(20)
}
