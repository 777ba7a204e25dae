use serde::{Deserialize, Serialize};

use super::{zeros_like, NnError, Params};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment optimizer state for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub m: P,
    pub v: P,
    pub t: u64,
    pub config: AdamConfig,
}

impl<P: Params + Clone> AdamState<P> {
    pub fn new(params: &P, config: AdamConfig) -> Self {
        Self {
            m: zeros_like(params),
            v: zeros_like(params),
            t: 0,
            config,
        }
    }

    /// Applies one descent step of `grads` to `params`.
    pub fn update(&mut self, params: &mut P, grads: &P) -> Result<(), NnError> {
        for (k, g) in grads.tensors().iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(NnError::GradientBlowUp { tensor: k });
            }
        }
        if params.shapes() != grads.shapes() || params.shapes() != self.m.shapes() {
            return Err(NnError::Shape {
                op: "adam_update",
                left: (params.num_params(), 1),
                right: (grads.num_params(), 1),
            });
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let step = lr / c1;
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= step * *m / ((*v / c2).sqrt() + epsilon);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer() -> Dense {
        Dense::new(3, 2, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = layer();
        let before = p.clone();
        let zero = zeros_like(&p);
        let mut opt = AdamState::new(&p, AdamConfig::with_lr(1e-3));
        opt.update(&mut p, &zero).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_each_parameter_by_lr() {
        let mut p = layer();
        let before = p.flatten();
        let mut g = zeros_like(&p);
        g.fill(0.37);
        let lr = 1e-3;
        let mut opt = AdamState::new(&p, AdamConfig::with_lr(lr));
        opt.update(&mut p, &g).unwrap();
        for (a, b) in before.iter().zip(p.flatten()) {
            // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
            assert!(((a - b) - lr * 0.37 / (0.37 + 1e-8)).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_calls_are_identical() {
        let mut g = zeros_like(&layer());
        g.fill(-0.2);
        let run = || {
            let mut p = layer();
            let mut opt = AdamState::new(&p, AdamConfig::with_lr(1e-2));
            opt.update(&mut p, &g).unwrap();
            opt.update(&mut p, &g).unwrap();
            (p, opt)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = layer();
        let mut g = zeros_like(&p);
        g.b[[0, 1]] = f64::NAN;
        let mut opt = AdamState::new(&p, AdamConfig::with_lr(1e-3));
        let err = opt.update(&mut p, &g).unwrap_err();
        assert_eq!(err, NnError::GradientBlowUp { tensor: 1 });
        assert!(err.to_string().contains("gradient blow-up"));
    }
}
