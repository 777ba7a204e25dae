use ndarray::s;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DdpgError, GoalSignal, TrainConfig, Transition, DISTANCE_SCALE};
use crate::geometry::Vec2;
use crate::nn::{hcat, soft_update, Activation, LstmCache, LstmCell, Mat, Mlp, Params};
use crate::sim::{Observation, SimParams};

/// Final-layer init range for actor and critic heads.
const HEAD_INIT: f64 = 3e-3;

/// Architecture and input normalization of a policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub n_rays: usize,
    pub k_stack: usize,
    pub lstm_hidden: usize,
    pub mlp_hidden: Vec<usize>,
    pub v_max: f64,
    /// Depth rays are divided by this before entering the encoder.
    pub depth_cap: f64,
    pub goal_signal: GoalSignal,
}

impl PolicyConfig {
    pub fn new(sim: &SimParams, cfg: &TrainConfig) -> Self {
        Self {
            n_rays: sim.n_rays,
            k_stack: sim.k_stack,
            lstm_hidden: cfg.lstm_hidden,
            mlp_hidden: cfg.mlp_hidden.clone(),
            v_max: sim.v_max,
            depth_cap: sim.depth_cap(),
            goal_signal: cfg.goal_signal,
        }
    }

    /// Velocity plus goal signal.
    pub fn aux_dim(&self) -> usize {
        2 + self.goal_signal.width()
    }

    pub fn embedding_dim(&self) -> usize {
        self.lstm_hidden + self.aux_dim()
    }

    /// Errors unless a policy with this config can drive an env with `sim`.
    pub fn check_compatible(&self, sim: &SimParams) -> Result<(), DdpgError> {
        let mismatch = |what: &str, p: String, s: String| {
            Err(DdpgError::ObservationShape(format!(
                "policy {what} {p} does not match simulator {s}"
            )))
        };
        if self.n_rays != sim.n_rays {
            return mismatch("n_rays", self.n_rays.to_string(), sim.n_rays.to_string());
        }
        if self.k_stack != sim.k_stack {
            return mismatch("k_stack", self.k_stack.to_string(), sim.k_stack.to_string());
        }
        if self.v_max != sim.v_max {
            return mismatch("v_max", self.v_max.to_string(), sim.v_max.to_string());
        }
        if self.depth_cap != sim.depth_cap() {
            return mismatch("depth_cap", self.depth_cap.to_string(), sim.depth_cap().to_string());
        }
        Ok(())
    }
}

/// Encoder, actor and critic parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Networks {
    pub encoder: LstmCell,
    pub actor: Mlp,
    pub critic: Mlp,
}

impl Params for Networks {
    fn tensors(&self) -> Vec<&Mat> {
        let mut v = self.encoder.tensors();
        v.extend(self.actor.tensors());
        v.extend(self.critic.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.actor.tensors_mut());
        v.extend(self.critic.tensors_mut());
        v
    }
}

/// Scales every row to norm at most 1.
pub fn clamp_rows(u: &Mat) -> Mat {
    let mut y = u.clone();
    for mut row in y.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 1.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    y
}

/// Gradient of [`clamp_rows`] with respect to `u`.
pub fn clamp_rows_backward(u: &Mat, dy: &Mat) -> Mat {
    let mut du = dy.clone();
    for (k, mut row) in du.rows_mut().into_iter().enumerate() {
        let ur = u.row(k);
        let n = ur.dot(&ur).sqrt();
        if n > 1.0 {
            let y = ur.mapv(|v| v / n);
            let proj = y.dot(&row);
            row.zip_mut_with(&y, |d, &yk| *d = (*d - yk * proj) / n);
        }
    }
    du
}

/// Builds encoder inputs: `k_stack` matrices `[batch x n_rays]` of scaled
/// depth, and the `[batch x aux]` velocity/goal block.
pub fn encode_batch(cfg: &PolicyConfig, obs: &[&Observation]) -> Result<(Vec<Mat>, Mat), DdpgError> {
    if obs.is_empty() {
        return Err(DdpgError::EmptyBatch);
    }
    let b = obs.len();
    let mut xs = vec![Mat::zeros((b, cfg.n_rays)); cfg.k_stack];
    let mut aux = Mat::zeros((b, cfg.aux_dim()));
    for (row, o) in obs.iter().enumerate() {
        if o.depth_stack.len() != cfg.k_stack {
            return Err(DdpgError::ObservationShape(format!(
                "expected {} stacked frames, got {}",
                cfg.k_stack,
                o.depth_stack.len()
            )));
        }
        for (t, frame) in o.depth_stack.iter().enumerate() {
            if frame.rays.len() != cfg.n_rays {
                return Err(DdpgError::ObservationShape(format!(
                    "expected {} rays, got {}",
                    cfg.n_rays,
                    frame.rays.len()
                )));
            }
            for (c, &r) in frame.rays.iter().enumerate() {
                xs[t][[row, c]] = r.min(cfg.depth_cap) / cfg.depth_cap;
            }
        }
        aux[[row, 0]] = o.vel.x / cfg.v_max;
        aux[[row, 1]] = o.vel.y / cfg.v_max;
        match cfg.goal_signal {
            GoalSignal::UnitVector => {
                aux[[row, 2]] = o.unit_to_goal.x;
                aux[[row, 3]] = o.unit_to_goal.y;
            }
            GoalSignal::Distance => aux[[row, 2]] = o.dist_to_goal / DISTANCE_SCALE,
        }
    }
    Ok((xs, aux))
}

impl Networks {
    pub fn new(cfg: &PolicyConfig, rng: &mut ChaCha8Rng) -> Self {
        let encoder = LstmCell::new(cfg.n_rays, cfg.lstm_hidden, rng);
        let emb = cfg.embedding_dim();
        let mut actor_sizes = vec![emb];
        actor_sizes.extend(&cfg.mlp_hidden);
        actor_sizes.push(2);
        let actor = Mlp::new(&actor_sizes, Activation::Relu, Activation::Tanh, HEAD_INIT, rng);
        let mut critic_sizes = vec![emb + 2];
        critic_sizes.extend(&cfg.mlp_hidden);
        critic_sizes.push(1);
        let critic = Mlp::new(&critic_sizes, Activation::Relu, Activation::Identity, HEAD_INIT, rng);
        Self {
            encoder,
            actor,
            critic,
        }
    }

    pub fn embed(&self, xs: &[Mat], aux: &Mat) -> Result<Mat, DdpgError> {
        let h = self.encoder.forward_sequence(xs)?;
        Ok(hcat(&[&h, aux])?)
    }

    pub fn embed_cached(&self, xs: &[Mat], aux: &Mat) -> Result<(Mat, LstmCache), DdpgError> {
        let (h, cache) = self.encoder.forward_sequence_cached(xs)?;
        Ok((hcat(&[&h, aux])?, cache))
    }

    /// Actions in units of `v_max`, each row of norm at most 1.
    pub fn act(&self, emb: &Mat) -> Result<Mat, DdpgError> {
        Ok(clamp_rows(&self.actor.forward(emb)?))
    }

    /// Q values `[batch x 1]` for unit-scaled actions.
    pub fn q(&self, emb: &Mat, a_unit: &Mat) -> Result<Mat, DdpgError> {
        Ok(self.critic.forward(&hcat(&[emb, a_unit])?)?)
    }
}

/// Online and target networks plus everything needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub config: PolicyConfig,
    pub online: Networks,
    pub target: Networks,
    /// Resolved run configuration carried along for provenance.
    pub echo: serde_json::Value,
}

impl Policy {
    /// Fresh networks; targets start as exact copies.
    pub fn new(config: PolicyConfig, rng: &mut ChaCha8Rng) -> Self {
        let online = Networks::new(&config, rng);
        Self {
            config,
            target: online.clone(),
            online,
            echo: serde_json::Value::Null,
        }
    }

    /// State embedding of one observation.
    pub fn encode(&self, obs: &Observation) -> Result<Vec<f64>, DdpgError> {
        let (xs, aux) = encode_batch(&self.config, &[obs])?;
        Ok(self.online.embed(&xs, &aux)?.row(0).to_vec())
    }

    /// Deterministic actor output in m/s.
    pub fn greedy_action(&self, obs: &Observation) -> Result<Vec2, DdpgError> {
        let (xs, aux) = encode_batch(&self.config, &[obs])?;
        let a = self.online.act(&self.online.embed(&xs, &aux)?)?;
        Ok(Vec2::new(a[[0, 0]], a[[0, 1]]) * self.config.v_max)
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<(), DdpgError> {
        Ok(soft_update(&self.online, &mut self.target, tau)?)
    }

    /// `y = r + gamma * (1 - done) * Q_target(s', actor_target(s'))`.
    pub fn critic_target(&self, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>, DdpgError> {
        if batch.is_empty() {
            return Err(DdpgError::EmptyBatch);
        }
        let next: Vec<&Observation> = batch.iter().map(|t| &t.s_next).collect();
        let (xs, aux) = encode_batch(&self.config, &next)?;
        let emb = self.target.embed(&xs, &aux)?;
        let a = self.target.act(&emb)?;
        let q = self.target.q(&emb, &a)?;
        Ok(batch
            .iter()
            .zip(q.column(0))
            .map(|(t, &q)| t.r + if t.done { 0.0 } else { gamma * q })
            .collect())
    }

    /// Index range of the action inside the critic input.
    pub(crate) fn action_columns(&self) -> std::ops::Range<usize> {
        let e = self.config.embedding_dim();
        e..e + 2
    }

    pub(crate) fn lstm_columns(&self) -> std::ops::Range<usize> {
        0..self.config.lstm_hidden
    }
}

/// Actor output plus Gaussian exploration noise (in units of `v_max`),
/// clamped to norm at most `v_max`. `sigma = 0` draws nothing.
pub fn select_action(
    policy: &Policy,
    obs: &Observation,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec2, DdpgError> {
    let v_max = policy.config.v_max;
    let greedy = policy.greedy_action(obs)? / v_max;
    let noisy = if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).map_err(|e| DdpgError::InvalidConfig(e.to_string()))?;
        greedy + Vec2::new(n.sample(rng), n.sample(rng))
    } else {
        greedy
    };
    Ok(noisy.clamp_norm(1.0) * v_max)
}

/// Uniform random action in the disc of radius `v_max`.
pub(crate) fn random_action(v_max: f64, rng: &mut ChaCha8Rng) -> Vec2 {
    let r = v_max * rng.random::<f64>().sqrt();
    Vec2::from_angle(rng.random::<f64>() * std::f64::consts::TAU) * r
}

pub(crate) fn split_columns(m: &Mat, range: std::ops::Range<usize>) -> Mat {
    m.slice(s![.., range]).to_owned()
}
