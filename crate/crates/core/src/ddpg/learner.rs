use ndarray::s;
use rand_chacha::ChaCha8Rng;

use super::policy::{clamp_rows, clamp_rows_backward, encode_batch, split_columns};
use super::{DdpgError, Policy, ReplayBuffer, TrainConfig, Transition};
use crate::nn::{clip_grad_norm, hcat, zeros_like, AdamConfig, AdamState, LstmCell, Mat, Mlp};
use crate::sim::Observation;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub critic_mse: f64,
    /// Mean Q of the actor's own actions on the batch.
    pub actor_objective: f64,
}

/// A policy together with its optimizer state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: Policy,
    encoder_opt: AdamState<LstmCell>,
    critic_opt: AdamState<Mlp>,
    actor_opt: AdamState<Mlp>,
}

impl Learner {
    pub fn new(policy: Policy, cfg: &TrainConfig) -> Self {
        Self {
            encoder_opt: AdamState::new(&policy.online.encoder, AdamConfig::with_lr(cfg.lr_critic)),
            critic_opt: AdamState::new(&policy.online.critic, AdamConfig::with_lr(cfg.lr_critic)),
            actor_opt: AdamState::new(&policy.online.actor, AdamConfig::with_lr(cfg.lr_actor)),
            policy,
        }
    }

    pub fn into_policy(self) -> Policy {
        self.policy
    }

    /// Samples a minibatch and performs one critic, actor and target update.
    pub fn train_step(
        &mut self,
        buffer: &ReplayBuffer,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Losses, DdpgError> {
        let batch = buffer
            .sample(cfg.batch_size, rng)
            .ok_or(DdpgError::BufferTooSmall {
                have: buffer.len(),
                need: cfg.batch_size,
            })?;
        self.train_on_batch(&batch, cfg)
    }

    pub fn train_on_batch(&mut self, batch: &[&Transition], cfg: &TrainConfig) -> Result<Losses, DdpgError> {
        if batch.is_empty() {
            return Err(DdpgError::EmptyBatch);
        }
        let n = batch.len() as f64;
        let y = self.policy.critic_target(batch, cfg.gamma)?;

        // Critic and encoder: minimize mean (Q(s, a) - y)^2.
        let net = &self.policy.online;
        let states: Vec<&Observation> = batch.iter().map(|t| &t.s).collect();
        let (xs, aux) = encode_batch(&self.policy.config, &states)?;
        let (emb, enc_cache) = net.embed_cached(&xs, &aux)?;
        let v_max = self.policy.config.v_max;
        let a_taken = Mat::from_shape_fn((batch.len(), 2), |(r, c)| {
            let a = batch[r].a;
            (if c == 0 { a.x } else { a.y }) / v_max
        });
        let (q, critic_cache) = net.critic.forward_cached(&hcat(&[&emb, &a_taken])?)?;
        let mut dq = Mat::zeros((batch.len(), 1));
        let mut mse = 0.0;
        for (k, &target) in y.iter().enumerate() {
            let err = q[[k, 0]] - target;
            mse += err * err;
            dq[[k, 0]] = 2.0 * err / n;
        }
        mse /= n;
        if !mse.is_finite() {
            return Err(DdpgError::Diverged);
        }
        let mut critic_grads = zeros_like(&net.critic);
        let d_in = net.critic.backward_into(&critic_cache, &dq, &mut critic_grads)?;
        let d_h = split_columns(&d_in, self.policy.lstm_columns());
        let mut enc_grads = zeros_like(&net.encoder);
        net.encoder.backward_sequence_into(&enc_cache, &d_h, &mut enc_grads)?;
        if cfg.max_grad_norm > 0.0 {
            clip_grad_norm(&mut critic_grads, cfg.max_grad_norm);
            clip_grad_norm(&mut enc_grads, cfg.max_grad_norm);
        }
        self.critic_opt.update(&mut self.policy.online.critic, &critic_grads)?;
        self.encoder_opt.update(&mut self.policy.online.encoder, &enc_grads)?;

        // Actor: ascend Q(s, actor(s)) through the updated critic, holding
        // the embedding fixed.
        let net = &self.policy.online;
        let (u, actor_cache) = net.actor.forward_cached(&emb)?;
        let a_unit = clamp_rows(&u);
        let (q_pi, critic_cache) = net.critic.forward_cached(&hcat(&[&emb, &a_unit])?)?;
        let objective = q_pi.sum() / n;
        if !objective.is_finite() {
            return Err(DdpgError::Diverged);
        }
        let dq = Mat::from_elem((batch.len(), 1), -1.0 / n);
        let mut scratch = zeros_like(&net.critic);
        let d_in = net.critic.backward_into(&critic_cache, &dq, &mut scratch)?;
        let d_a = d_in.slice(s![.., self.policy.action_columns()]).to_owned();
        let d_u = clamp_rows_backward(&u, &d_a);
        let mut actor_grads = zeros_like(&net.actor);
        net.actor.backward_into(&actor_cache, &d_u, &mut actor_grads)?;
        if cfg.max_grad_norm > 0.0 {
            clip_grad_norm(&mut actor_grads, cfg.max_grad_norm);
        }
        self.actor_opt.update(&mut self.policy.online.actor, &actor_grads)?;

        self.policy.soft_update_targets(cfg.tau)?;
        Ok(Losses {
            critic_mse: mse,
            actor_objective: objective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddpg::PolicyConfig;
    use crate::geometry::Vec2;
    use crate::nn::Params;
    use crate::rewards::RewardParams;
    use crate::scene::builtin;
    use crate::sim::{Env, SimParams};
    use rand::SeedableRng;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            lstm_hidden: 8,
            mlp_hidden: vec![16, 16],
            batch_size: 1,
            ..TrainConfig::default()
        }
    }

    fn transition() -> Transition {
        let s = builtin("train").unwrap();
        let (mut env, obs) = Env::reset(&s, &SimParams::default(), &RewardParams::default(), 0).unwrap();
        let r = env.step(Vec2::new(2.0, 0.0)).unwrap();
        Transition {
            s: obs,
            a: Vec2::new(2.0, 0.0),
            r: r.reward.total,
            s_next: r.obs,
            done: false,
        }
    }

    fn learner(cfg: &TrainConfig) -> Learner {
        let pc = PolicyConfig::new(&SimParams::default(), cfg);
        Learner::new(Policy::new(pc, &mut ChaCha8Rng::seed_from_u64(0)), cfg)
    }

    #[test]
    fn critic_error_shrinks_on_a_fixed_transition() {
        let cfg = small_cfg();
        let mut l = learner(&cfg);
        let t = transition();
        let first = l.train_on_batch(&[&t], &cfg).unwrap().critic_mse;
        let mut last = first;
        for _ in 0..100 {
            last = l.train_on_batch(&[&t], &cfg).unwrap().critic_mse;
        }
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn tau_one_copies_and_tau_zero_freezes_targets() {
        let t = transition();
        let cfg = TrainConfig {
            tau: 1.0,
            ..small_cfg()
        };
        let mut l = learner(&cfg);
        l.train_on_batch(&[&t], &cfg).unwrap();
        assert_eq!(l.policy.target, l.policy.online);

        // tau = 0 is rejected by config validation but is a valid no-op here.
        let cfg = TrainConfig {
            tau: 0.0,
            ..small_cfg()
        };
        let mut l = learner(&cfg);
        let before = l.policy.target.clone();
        l.train_on_batch(&[&t], &cfg).unwrap();
        assert_eq!(l.policy.target, before);
        assert_ne!(l.policy.online.flatten(), before.flatten());
    }

    #[test]
    fn train_step_needs_a_full_batch() {
        let cfg = TrainConfig {
            batch_size: 4,
            ..small_cfg()
        };
        let mut l = learner(&cfg);
        let mut buf = ReplayBuffer::new(10);
        buf.push(transition());
        let err = l.train_step(&buf, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, DdpgError::BufferTooSmall { have: 1, need: 4 }));
    }
}
