//! Deep deterministic policy gradient with an LSTM depth encoder.
//!
//! The encoder runs over the stacked depth frames and its final hidden state
//! is concatenated with the scaled velocity and the goal signal. Actor and
//! critic are MLPs on that embedding. The encoder is trained through the
//! critic loss; the actor sees the embedding as a constant.

mod checkpoint;
mod gradients;
mod learner;
mod policy;
mod replay;
mod train;

pub use checkpoint::{load_policy, read_policy, save_policy, write_policy, CHECKPOINT_SCHEMA_VERSION};
pub use gradients::{gradient_suite, GradientSuiteReport};
pub use learner::{Learner, Losses};
pub use policy::{
    clamp_rows, clamp_rows_backward, encode_batch, select_action, Networks, Policy, PolicyConfig,
};
pub use replay::{ReplayBuffer, Transition};
pub use train::{
    evaluate, run_greedy_episode, train, write_training_log, EpisodeRecord, EvalEpisode,
    TrainingLog, TRAINING_LOG_HEADER,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum DdpgError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("observation shape mismatch: {0}")]
    ObservationShape(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("replay buffer holds {have} transitions, batch needs {need}")]
    BufferTooSmall { have: usize, need: usize },
    #[error("training diverged")]
    Diverged,
    #[error("training diverged in episode {episode}: {source}")]
    DivergedAt {
        episode: usize,
        #[source]
        source: Box<DdpgError>,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint schema_version {found} does not match supported version {expected}")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What the policy receives about the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSignal {
    UnitVector,
    Distance,
}

impl GoalSignal {
    pub fn width(self) -> usize {
        match self {
            GoalSignal::UnitVector => 2,
            GoalSignal::Distance => 1,
        }
    }
}

/// Distance signal divisor in meters; fixed, not scene-normalized.
pub const DISTANCE_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub noise_sigma_start: f64,
    pub noise_sigma_end: f64,
    pub noise_decay_steps: usize,
    pub episodes: usize,
    /// Greedy evaluation cadence in episodes; 0 disables it.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub goal_signal: GoalSignal,
    pub lstm_hidden: usize,
    pub mlp_hidden: Vec<usize>,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    /// Global gradient-norm cap per network; 0 disables clipping.
    pub max_grad_norm: f64,
    /// Stop early once a periodic greedy evaluation reaches this success rate.
    pub stop_at_eval_sr: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            batch_size: 64,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            noise_sigma_start: 0.4,
            noise_sigma_end: 0.05,
            noise_decay_steps: 50_000,
            episodes: 2000,
            eval_every: 50,
            eval_episodes: 10,
            seed: 0,
            goal_signal: GoalSignal::UnitVector,
            lstm_hidden: 32,
            mlp_hidden: vec![64, 64],
            train_every: 1,
            max_grad_norm: 10.0,
            stop_at_eval_sr: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DdpgError> {
        let bad = |m: &str| Err(DdpgError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.lr_actor > 0.0 && self.lr_critic > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("require 0 < batch_size <= buffer_capacity");
        }
        if self.noise_sigma_start < 0.0 || self.noise_sigma_end < 0.0 {
            return bad("noise sigmas must be nonnegative");
        }
        if self.lstm_hidden == 0 || self.mlp_hidden.contains(&0) {
            return bad("layer widths must be positive");
        }
        if self.train_every == 0 {
            return bad("train_every must be at least 1");
        }
        if self.max_grad_norm < 0.0 {
            return bad("max_grad_norm must be nonnegative");
        }
        Ok(())
    }

    /// Exploration sigma after `steps` environment steps past warmup.
    pub fn noise_sigma(&self, steps: usize) -> f64 {
        if self.noise_decay_steps == 0 {
            return self.noise_sigma_end;
        }
        let frac = (steps as f64 / self.noise_decay_steps as f64).min(1.0);
        self.noise_sigma_start + (self.noise_sigma_end - self.noise_sigma_start) * frac
    }
}
