//! Adam with bias correction, and the mini-batch training loop around it.
//!
//! For step `t` (1-based after the increment):
//!
//! ```text
//! m = b1 m + (1 - b1) g
//! v = b2 v + (1 - b2) g^2
//! p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
//! ```
//!
//! `eps` sits outside the square root.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::network::{GradientSet, LayerStack, NetworkParameters, Workspace};
use crate::sampling::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::InvalidConfig(format!(
                "beta1 and beta2 must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Moment estimates carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: GradientSet,
    pub second_moment: GradientSet,
}

impl AdamState {
    pub fn new(params: &NetworkParameters) -> Self {
        AdamState {
            step_count: 0,
            first_moment: GradientSet::zeros_like(params),
            second_moment: GradientSet::zeros_like(params),
        }
    }
}

/// One Adam update on flat slices. `step` is the count after incrementing.
pub fn adam_update(
    params: &mut [f64],
    first_moment: &mut [f64],
    second_moment: &mut [f64],
    grads: &[f64],
    step: u64,
    config: &AdamConfig,
) {
    debug_assert!(step >= 1);
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = *config;
    let t = i32::try_from(step).unwrap_or(i32::MAX);
    let correction1 = 1.0 - beta1.powi(t);
    let correction2 = 1.0 - beta2.powi(t);
    for (((p, m), v), &g) in params
        .iter_mut()
        .zip(first_moment.iter_mut())
        .zip(second_moment.iter_mut())
        .zip(grads)
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
}

fn step_in_place(
    params: &mut NetworkParameters,
    state: &mut AdamState,
    grads: &GradientSet,
    config: &AdamConfig,
) -> Result<()> {
    if !params.congruent_with(grads)
        || !params.congruent_with(&state.first_moment)
        || !params.congruent_with(&state.second_moment)
    {
        return Err(Error::ShapeMismatch(
            "parameters, gradients and optimizer state differ in shape".into(),
        ));
    }
    state.step_count += 1;
    let step = state.step_count;
    for (((p, m), v), g) in params
        .layers_mut()
        .iter_mut()
        .zip(state.first_moment.layers_mut().iter_mut())
        .zip(state.second_moment.layers_mut().iter_mut())
        .zip(grads.layers())
    {
        adam_update(
            p.weights_mut(),
            m.weights_mut(),
            v.weights_mut(),
            g.weights(),
            step,
            config,
        );
        adam_update(
            p.bias_mut(),
            m.bias_mut(),
            v.bias_mut(),
            g.bias(),
            step,
            config,
        );
    }
    Ok(())
}

/// Pure Adam step: returns the updated parameters and state.
pub fn adam_step(
    params: &NetworkParameters,
    state: &AdamState,
    grads: &GradientSet,
    config: &AdamConfig,
) -> Result<(NetworkParameters, AdamState)> {
    let mut params = params.clone();
    let mut state = state.clone();
    step_in_place(&mut params, &mut state, grads, config)?;
    Ok((params, state))
}

/// Mini-batch Adam training.
///
/// Every epoch shuffles the sample order with `rng` (Fisher-Yates), splits it
/// into consecutive batches of `batch_size` (the last may be short) and takes
/// one Adam step per batch. Returns the trained parameters and the final
/// optimizer state.
pub fn train_epochs<R: Rng + ?Sized>(
    params: NetworkParameters,
    dataset: &Dataset,
    config: &AdamConfig,
    epochs: usize,
    batch_size: usize,
    rng: &mut R,
) -> Result<(NetworkParameters, AdamState)> {
    if epochs == 0 || batch_size == 0 {
        return Err(Error::InvalidConfig(format!(
            "epochs and batch_size must be >= 1 (got {epochs}, {batch_size})"
        )));
    }
    let n = dataset.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if params.spec().input_dim != 2 {
        return Err(Error::ShapeMismatch(format!(
            "dataset points are 2-d, network expects {}",
            params.spec().input_dim
        )));
    }

    let mut params = params;
    let mut state = AdamState::new(&params);
    let mut grads = GradientSet::zeros_like(&params);
    let mut ws = Workspace::new(params.spec());
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch_inputs: Vec<&[f64]> = Vec::with_capacity(batch_size.min(n));
    let mut batch_targets: Vec<f64> = Vec::with_capacity(batch_size.min(n));

    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            batch_inputs.clear();
            batch_targets.clear();
            for &i in chunk {
                batch_inputs.push(&dataset.inputs[i]);
                batch_targets.push(dataset.targets[i]);
            }
            params.accumulate_gradients(&batch_inputs, &batch_targets, &mut grads, &mut ws);
            step_in_place(&mut params, &mut state, &grads, config)?;
        }
    }
    Ok((params, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Layer, NetworkSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_step(theta: f64, g: f64, config: &AdamConfig) -> f64 {
        let mut p = [theta];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &mut m, &mut v, &[g], 1, config);
        p[0]
    }

    #[test]
    fn first_step_from_zero() {
        let cfg = AdamConfig::default();
        let updated = scalar_step(0.0, 1.0, &cfg);
        // m_hat = 1, v_hat = 1 at t = 1.
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((updated - expected).abs() < 1e-15);
        assert!((updated - (-0.000999999990)).abs() < 1e-14);
    }

    #[test]
    fn first_step_ignores_gradient_magnitude() {
        let cfg = AdamConfig::default();
        let a = scalar_step(0.0, 1.0, &cfg);
        let b = scalar_step(0.0, 100.0, &cfg);
        // Equal up to the epsilon in the denominator: lr * eps / |g|.
        assert!((a - b).abs() <= cfg.learning_rate * cfg.epsilon);
        assert!((scalar_step(0.0, -1.0, &cfg) + a).abs() < 1e-18);
    }

    fn small_net(seed: u64) -> NetworkParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NetworkParameters::init(NetworkSpec::planar(3, 2).unwrap(), &mut rng).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let params = small_net(1);
        let state = AdamState::new(&params);
        let grads = GradientSet::zeros_like(&params);
        let (next, next_state) = adam_step(&params, &state, &grads, &AdamConfig::default()).unwrap();
        let bits = |n: &NetworkParameters| n.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&next), bits(&params));
        assert_eq!(next_state.step_count, 1);
        assert_eq!(state.step_count, 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let params = small_net(1);
        let other = NetworkParameters::zeros(NetworkSpec::planar(2, 2).unwrap()).unwrap();
        let state = AdamState::new(&params);
        let grads = GradientSet::zeros_like(&other);
        assert!(matches!(
            adam_step(&params, &state, &grads, &AdamConfig::default()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        for bad in [
            AdamConfig { learning_rate: 0.0, ..Default::default() },
            AdamConfig { beta1: 1.0, ..Default::default() },
            AdamConfig { beta2: 0.0, ..Default::default() },
            AdamConfig { epsilon: -1.0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    fn abs_dataset(n: usize) -> Dataset {
        let inputs: Vec<[f64; 2]> = (0..n)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                [x, 0.5 - x / 3.0]
            })
            .collect();
        let targets = inputs.iter().map(|p| p[0].abs()).collect();
        Dataset::from_raw(inputs, targets).unwrap()
    }

    #[test]
    fn single_full_batch_epoch_is_one_step() {
        let data = abs_dataset(16);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (_, state) = train_epochs(small_net(2), &data, &AdamConfig::default(), 1, 16, &mut rng).unwrap();
        assert_eq!(state.step_count, 1);

        let (_, state) = train_epochs(small_net(2), &data, &AdamConfig::default(), 3, 5, &mut rng).unwrap();
        assert_eq!(state.step_count, 12);
    }

    #[test]
    fn full_batch_training_matches_manual_steps() {
        let data = abs_dataset(10);
        let cfg = AdamConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (trained, _) = train_epochs(small_net(4), &data, &cfg, 3, 10, &mut rng).unwrap();

        let mut params = small_net(4);
        let mut state = AdamState::new(&params);
        for _ in 0..3 {
            let g = params.backward(&data.inputs, &data.targets).unwrap();
            (params, state) = adam_step(&params, &state, &g, &cfg).unwrap();
        }
        // Shuffling reorders the sum, so agreement is up to rounding.
        for (a, b) in trained.values().iter().zip(params.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = abs_dataset(50);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            train_epochs(small_net(7), &data, &AdamConfig::default(), 5, 8, &mut rng)
                .unwrap()
                .0
                .values()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn training_rejects_bad_arguments() {
        let data = abs_dataset(8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = AdamConfig::default();
        assert!(train_epochs(small_net(1), &data, &cfg, 0, 4, &mut rng).is_err());
        assert!(train_epochs(small_net(1), &data, &cfg, 1, 0, &mut rng).is_err());
    }

    #[test]
    fn absolute_value_training_reduces_loss() {
        let data = abs_dataset(64);
        let cfg = AdamConfig::default();
        let spec = NetworkSpec::planar(2, 1).unwrap();
        let mut improved = 0;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = NetworkParameters::init(spec, &mut rng).unwrap();
            let before = init.batch_loss(&data.inputs, &data.targets).unwrap();
            let (trained, _) = train_epochs(init, &data, &cfg, 100, 16, &mut rng).unwrap();
            let after = trained.batch_loss(&data.inputs, &data.targets).unwrap();
            if after < before {
                improved += 1;
            }
        }
        assert!(improved >= 95, "only {improved} of 100 seeds improved");
    }

    #[test]
    fn handcrafted_net_is_a_fixed_point() {
        let spec = NetworkSpec::planar(2, 1).unwrap();
        let params = NetworkParameters::from_layers(
            spec,
            vec![
                Layer::from_parts(2, 2, vec![1.0, 0.0, -1.0, 0.0], vec![0.0, 0.0]).unwrap(),
                Layer::from_parts(1, 2, vec![1.0, 1.0], vec![0.0]).unwrap(),
            ],
        )
        .unwrap();
        let data = abs_dataset(9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (trained, _) = train_epochs(params.clone(), &data, &AdamConfig::default(), 2, 3, &mut rng).unwrap();
        assert_eq!(trained, params);
    }

    proptest! {
        #[test]
        fn steps_stay_in_envelope_and_moments_nonnegative(
            seed in 0u64..500,
            steps in 1usize..30,
            scale in prop::sample::select(vec![1e-6, 1e-2, 1.0, 1e3, 1e6]),
        ) {
            let cfg = AdamConfig::default();
            let mut params = small_net(seed);
            let mut state = AdamState::new(&params);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
            for _ in 0..steps {
                let mut g = GradientSet::zeros_like(&params);
                g.for_each_value_mut(|v| *v = scale * (rng.random::<f64>() * 2.0 - 1.0));
                let (next, next_state) = adam_step(&params, &state, &g, &cfg).unwrap();
                for (a, b) in params.values().iter().zip(next.values()) {
                    prop_assert!((a - b).abs() <= 10.0 * cfg.learning_rate);
                }
                prop_assert!(next_state.second_moment.values().iter().all(|&v| v >= 0.0));
                prop_assert_eq!(next_state.step_count, state.step_count + 1);
                params = next;
                state = next_state;
            }
        }
    }
}
