//! Adam with coupled L2 weight decay: the decay term is added to the
//! gradient before the moment updates.

use super::{cast, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        AdamConfig {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter group plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
}

impl<F: Scalar> AdamState<F> {
    /// Zero moments shaped like the given parameter groups.
    pub fn new(config: AdamConfig, group_sizes: &[usize]) -> Self {
        AdamState {
            config,
            m: group_sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: group_sizes.iter().map(|&n| vec![F::zero(); n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One optimizer step over matching parameter and gradient groups.
pub fn adam_step<F: Scalar>(
    params: &mut [&mut [F]],
    grads: &[&[F]],
    state: &mut AdamState<F>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam group counts differ: {} params, {} grads, {} state",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::Shape(format!(
                "adam group {i} sizes differ: {} params, {} grads, {} state",
                p.len(),
                g.len(),
                state.m[i].len()
            )));
        }
    }

    state.t += 1;
    let beta1 = cast::<F>(state.config.beta1);
    let beta2 = cast::<F>(state.config.beta2);
    let one = F::one();
    let lr = cast::<F>(state.config.learning_rate);
    let wd = cast::<F>(state.config.weight_decay);
    let eps = cast::<F>(state.config.epsilon);
    // bias corrections in f64; exact powers matter for early steps
    let corr1 = cast::<F>(1.0 - state.config.beta1.powi(state.t as i32));
    let corr2 = cast::<F>(1.0 - state.config.beta2.powi(state.t as i32));

    for ((group, grads), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((p, &g), m), v) in group.iter_mut().zip(*grads).zip(m).zip(v) {
            let g = g + wd * *p;
            *m = beta1 * *m + (one - beta1) * g;
            *v = beta2 * *v + (one - beta2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_unit_gradient_by_learning_rate() {
        // scalar recomputation: m_hat = v_hat = 1 on the first step
        let mut state = AdamState::<f64>::new(AdamConfig::new(1e-3, 0.0), &[1]);
        let mut w = vec![0.0f64];
        adam_step(&mut [&mut w], &[&[1.0]], &mut state).unwrap();
        assert!((w[0] - (-1e-3)).abs() < 1e-6);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_parameters_unchanged() {
        let mut state = AdamState::<f32>::new(AdamConfig::new(1e-3, 0.0), &[3]);
        let mut w = vec![0.5f32, -0.25, 2.0];
        let before = w.clone();
        adam_step(&mut [&mut w], &[&[0.0, 0.0, 0.0]], &mut state).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn weight_decay_shrinks_a_stationary_weight() {
        let mut state = AdamState::<f64>::new(AdamConfig::new(1e-3, 1e-4), &[1]);
        let mut w = vec![1.0f64];
        adam_step(&mut [&mut w], &[&[0.0]], &mut state).unwrap();
        assert!(w[0] < 1.0);
    }

    #[test]
    fn zero_learning_rate_is_bit_identical() {
        let mut state = AdamState::<f32>::new(
            AdamConfig {
                learning_rate: 0.0,
                ..AdamConfig::new(0.0, 1e-4)
            },
            &[2],
        );
        let mut w = vec![0.123456f32, -9.875];
        let before = w.clone();
        for _ in 0..5 {
            adam_step(&mut [&mut w], &[&[0.7, -0.3]], &mut state).unwrap();
        }
        assert_eq!(w[0].to_bits(), before[0].to_bits());
        assert_eq!(w[1].to_bits(), before[1].to_bits());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut state = AdamState::<f32>::new(AdamConfig::new(1e-3, 0.0), &[2]);
        let mut w = vec![0.0f32, 0.0];
        assert!(matches!(
            adam_step(&mut [&mut w], &[&[1.0]], &mut state),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn second_moment_stays_nonnegative() {
        let mut state = AdamState::<f64>::new(AdamConfig::new(1e-2, 1e-4), &[1]);
        let mut w = vec![0.3f64];
        for i in 0..50 {
            let g = if i % 2 == 0 { 1.5 } else { -2.5 };
            adam_step(&mut [&mut w], &[&[g]], &mut state).unwrap();
            assert!(state.v.iter().flatten().all(|&v| v >= 0.0));
        }
        assert_eq!(state.step_count(), 50);
    }
}
