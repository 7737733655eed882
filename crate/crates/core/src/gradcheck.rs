//! Randomized comparison of backpropagation against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::network::{LayerStack, NetworkParameters, NetworkSpec};

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-4;
/// Coordinates with a smaller exact gradient are compared absolutely.
pub const SMALL_GRADIENT: f64 = 1e-8;
/// Pass threshold on the worst relative (or small-gradient absolute) error.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub draws: usize,
    pub coordinates: usize,
    /// Worst `|bp - fd| / |bp|` over coordinates with `|bp| >= SMALL_GRADIENT`.
    pub max_relative_error: f64,
    /// Worst `|bp - fd|` over the remaining coordinates.
    pub max_small_abs_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < TOLERANCE && self.max_small_abs_error < TOLERANCE
    }
}

/// Compare `exact` against `approx`, coordinate by coordinate.
pub fn compare(exact: &[f64], approx: &[f64]) -> (f64, f64) {
    exact
        .iter()
        .zip(approx)
        .fold((0.0f64, 0.0f64), |(rel, abs), (&e, &a)| {
            let diff = (e - a).abs();
            if e.abs() >= SMALL_GRADIENT {
                (rel.max(diff / e.abs()), abs)
            } else {
                (rel, abs.max(diff))
            }
        })
}

/// Check `draws` random networks with width in 1..=4 and depth in 1..=3,
/// each on a random batch of 1 to 8 points in `[-1, 1]^2`.
pub fn run(seed: u64, draws: usize) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        draws,
        coordinates: 0,
        max_relative_error: 0.0,
        max_small_abs_error: 0.0,
    };
    for _ in 0..draws {
        let width = rng.random_range(1..=4);
        let depth = rng.random_range(1..=3);
        let spec = NetworkSpec::planar(width, depth)?;
        let mut params = NetworkParameters::init(spec, &mut rng)?;
        // Nonzero biases so every code path carries gradient.
        for l in params.layers_mut() {
            for b in l.bias_mut() {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        let n = rng.random_range(1..=8);
        let inputs: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

        let exact = params.backward(&inputs, &targets)?.values();
        let approx = params.finite_diff_grad(&inputs, &targets, FD_STEP)?.values();
        let (rel, abs) = compare(&exact, &approx);
        report.coordinates += exact.len();
        report.max_relative_error = report.max_relative_error.max(rel);
        report.max_small_abs_error = report.max_small_abs_error.max(abs);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let report = run(0, 25).unwrap();
        assert_eq!(report.draws, 25);
        assert!(report.coordinates > 25);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn compare_splits_small_coordinates() {
        let (rel, abs) = compare(&[1.0, 1e-9, -2.0], &[1.0 + 1e-6, 3e-9, -2.0]);
        assert!((rel - 1e-6).abs() < 1e-12);
        assert!((abs - 2e-9).abs() < 1e-18);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let (rel, _) = compare(&[1.0, 2.0], &[1.0, 2.1]);
        assert!(rel > TOLERANCE);
    }
}
