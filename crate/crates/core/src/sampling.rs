//! Grid sampling of function domains and min-max normalization.
//!
//! Normalized datasets map inputs affinely from the domain onto `[-1, 1]^2`
//! and targets onto `[0, 1]` using the minimum and maximum of the sampled
//! targets. A test set normalized with a training set's statistics may
//! stray slightly outside `[0, 1]` when it samples points the training grid
//! missed.

use crate::error::{Error, Result};
use crate::functions::{Domain, TestFunction};

/// `k` equally spaced values from `lo` to `hi`, both endpoints exact.
fn axis(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    let last = (k - 1) as f64;
    (0..k).map(move |i| {
        let t = i as f64 / last;
        lo * (1.0 - t) + hi * t
    })
}

/// The `k x k` inclusive grid over `domain` in row-major order: `x` is the
/// outer index and `y` varies fastest.
pub fn grid(domain: &Domain, k: usize) -> Result<Vec<[f64; 2]>> {
    if k < 2 {
        return Err(Error::GridTooCoarse(k));
    }
    domain.validate()?;
    let ys: Vec<f64> = axis(domain.y_min, domain.y_max, k).collect();
    Ok(axis(domain.x_min, domain.x_max, k)
        .flat_map(|x| ys.iter().map(move |&y| [x, y]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    /// Inputs are mapped from this rectangle onto `[-1, 1]^2`.
    pub domain: Domain,
    pub target_min: f64,
    pub target_max: f64,
}

impl NormStats {
    pub fn is_degenerate(&self) -> bool {
        self.target_min == self.target_max
    }

    pub fn normalize_input(&self, p: [f64; 2]) -> [f64; 2] {
        let d = &self.domain;
        [
            2.0 * (p[0] - d.x_min) / (d.x_max - d.x_min) - 1.0,
            2.0 * (p[1] - d.y_min) / (d.y_max - d.y_min) - 1.0,
        ]
    }

    /// Degenerate statistics send every target to 0.
    pub fn normalize_target(&self, t: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (t - self.target_min) / (self.target_max - self.target_min)
        }
    }
}

/// Map a normalized target back to function units.
pub fn denormalize(value: f64, stats: &NormStats) -> Result<f64> {
    if stats.is_degenerate() {
        return Err(Error::DegenerateTargets(stats.target_min));
    }
    Ok(stats.target_min + value * (stats.target_max - stats.target_min))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<[f64; 2]>,
    pub targets: Vec<f64>,
    /// Present when the data has been normalized.
    pub norm: Option<NormStats>,
}

impl Dataset {
    pub fn from_raw(inputs: Vec<[f64; 2]>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(Dataset {
            inputs,
            targets,
            norm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// True when normalization found a zero-width target range.
    pub fn is_degenerate(&self) -> bool {
        self.norm.is_some_and(|s| s.is_degenerate())
    }

    /// Normalize with statistics taken from this dataset's own targets.
    pub fn normalized(self, domain: Domain) -> Result<Self> {
        let (lo, hi) = self
            .targets
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        let stats = NormStats {
            domain,
            target_min: lo,
            target_max: hi,
        };
        Ok(self.normalized_with(stats))
    }

    /// Normalize with externally supplied statistics.
    pub fn normalized_with(mut self, stats: NormStats) -> Self {
        for p in &mut self.inputs {
            *p = stats.normalize_input(*p);
        }
        for t in &mut self.targets {
            *t = stats.normalize_target(*t);
        }
        self.norm = Some(stats);
        self
    }

    fn sample(f: &TestFunction, k: usize) -> Result<Self> {
        let inputs = grid(&f.domain, k)?;
        let targets = inputs
            .iter()
            .map(|p| f.eval(p[0], p[1]))
            .collect::<Result<Vec<_>>>()?;
        Dataset::from_raw(inputs, targets)
    }
}

/// Sample `f` on the `k x k` grid of its domain, optionally normalizing.
pub fn build_dataset(f: &TestFunction, k: usize, normalize: bool) -> Result<Dataset> {
    let raw = Dataset::sample(f, k)?;
    if normalize {
        raw.normalized(f.domain)
    } else {
        Ok(raw)
    }
}

/// Sample `f` on a `k x k` grid, normalizing with `stats` when given.
pub fn build_dataset_with(f: &TestFunction, k: usize, stats: Option<NormStats>) -> Result<Dataset> {
    let raw = Dataset::sample(f, k)?;
    Ok(match stats {
        Some(s) => raw.normalized_with(s),
        None => raw,
    })
}
