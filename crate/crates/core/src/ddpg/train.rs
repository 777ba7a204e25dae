use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::random_action;
use super::{select_action, DdpgError, Learner, Policy, PolicyConfig, ReplayBuffer, TrainConfig, Transition};
use crate::nn::Params;
use crate::rewards::RewardParams;
use crate::scene::Scene;
use crate::sim::{Env, LogRow, SimParams, Status};

pub const TRAINING_LOG_HEADER: &str = "episode,return,steps,outcome,eval_sr";

/// Salt separating evaluation episode seeds from training ones.
const EVAL_SALT: u64 = 0x5eed_e7a1;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub ret: f64,
    pub steps: usize,
    pub outcome: Status,
    /// Greedy success rate in percent, when an evaluation ran after this episode.
    pub eval_sr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
    pub total_steps: usize,
    pub updates: usize,
}

impl TrainingLog {
    pub fn last_eval_sr(&self) -> Option<f64> {
        self.episodes.iter().rev().find_map(|e| e.eval_sr)
    }
}

pub fn write_training_log<W: Write>(log: &TrainingLog, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRAINING_LOG_HEADER}")?;
    for e in &log.episodes {
        let sr = e.eval_sr.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", e.episode, e.ret, e.steps, e.outcome, sr)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalEpisode {
    pub seed: u64,
    pub outcome: Status,
    pub ret: f64,
    pub log: Vec<LogRow>,
}

/// Deterministic per-episode seed stream.
pub(crate) fn episode_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs the actor without noise until the episode ends.
pub fn run_greedy_episode(
    policy: &Policy,
    scene: &Scene,
    sim: &SimParams,
    rewards: &RewardParams,
    seed: u64,
) -> Result<EvalEpisode, DdpgError> {
    policy.config.check_compatible(sim)?;
    let (mut env, mut obs) = Env::reset(scene, sim, rewards, seed)?;
    let mut ret = 0.0;
    loop {
        let a = policy.greedy_action(&obs)?;
        let r = env.step(a)?;
        ret += r.reward.total;
        obs = r.obs;
        if r.status.is_terminal() {
            return Ok(EvalEpisode {
                seed,
                outcome: r.status,
                ret,
                log: env.into_log(),
            });
        }
    }
}

/// Greedy rollouts with seeds derived from `seed`.
pub fn evaluate(
    policy: &Policy,
    scene: &Scene,
    sim: &SimParams,
    rewards: &RewardParams,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EvalEpisode>, DdpgError> {
    (0..episodes as u64)
        .map(|i| run_greedy_episode(policy, scene, sim, rewards, episode_seed(seed ^ EVAL_SALT, i)))
        .collect()
}

fn success_percent(eps: &[EvalEpisode]) -> f64 {
    if eps.is_empty() {
        return 0.0;
    }
    100.0 * eps.iter().filter(|e| e.outcome == Status::Goal).count() as f64 / eps.len() as f64
}

/// Trains a fresh policy on `scene`. Divergence surfaces as
/// [`DdpgError::DivergedAt`] naming the episode.
pub fn train(
    scene: &Scene,
    sim: &SimParams,
    rewards: &RewardParams,
    cfg: &TrainConfig,
) -> Result<(Policy, TrainingLog), DdpgError> {
    cfg.validate()?;
    sim.validate()?;
    rewards
        .validate()
        .map_err(|e| DdpgError::InvalidConfig(e.to_string()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let policy = Policy::new(PolicyConfig::new(sim, cfg), &mut rng);
    let mut learner = Learner::new(policy, cfg);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut log = TrainingLog::default();

    for episode in 0..cfg.episodes {
        let at = |e: DdpgError| DdpgError::DivergedAt {
            episode,
            source: Box::new(e),
        };
        let (mut env, mut obs) = Env::reset(scene, sim, rewards, episode_seed(cfg.seed, episode as u64))?;
        let mut ret = 0.0;
        let status = loop {
            let a = if log.total_steps < cfg.warmup_steps {
                random_action(sim.v_max, &mut rng)
            } else {
                let sigma = cfg.noise_sigma(log.total_steps - cfg.warmup_steps);
                select_action(&learner.policy, &obs, sigma, &mut rng)?
            };
            let r = env.step(a)?;
            ret += r.reward.total;
            log.total_steps += 1;
            let done = matches!(r.status, Status::Goal | Status::Collision | Status::OutOfBounds);
            buffer.push(Transition {
                s: obs,
                a,
                r: r.reward.total,
                s_next: r.obs.clone(),
                done,
            });
            obs = r.obs;
            if log.total_steps >= cfg.warmup_steps
                && buffer.len() >= cfg.batch_size
                && log.total_steps % cfg.train_every == 0
            {
                learner.train_step(&buffer, cfg, &mut rng).map_err(at)?;
                log.updates += 1;
            }
            if r.status.is_terminal() {
                break r.status;
            }
        };
        if !learner.policy.online.all_finite() {
            return Err(at(DdpgError::Diverged));
        }

        let eval_sr = if cfg.eval_every > 0 && (episode + 1) % cfg.eval_every == 0 {
            let eps = evaluate(&learner.policy, scene, sim, rewards, cfg.eval_episodes, cfg.seed)?;
            Some(success_percent(&eps))
        } else {
            None
        };
        log.episodes.push(EpisodeRecord {
            episode,
            ret,
            steps: env.steps(),
            outcome: status,
            eval_sr,
        });
        if let (Some(target), Some(sr)) = (cfg.stop_at_eval_sr, eval_sr) {
            if sr >= target {
                break;
            }
        }
    }
    Ok((learner.into_policy(), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::builtin;

    fn tiny() -> TrainConfig {
        TrainConfig {
            episodes: 3,
            warmup_steps: 50,
            batch_size: 16,
            lstm_hidden: 4,
            mlp_hidden: vec![8],
            eval_every: 3,
            eval_episodes: 2,
            ..TrainConfig::default()
        }
    }

    fn sim() -> SimParams {
        SimParams {
            max_steps: 60,
            n_rays: 8,
            ..SimParams::default()
        }
    }

    #[test]
    fn same_seed_same_run() {
        let s = builtin("train").unwrap();
        let (p1, l1) = train(&s, &sim(), &RewardParams::default(), &tiny()).unwrap();
        let (p2, l2) = train(&s, &sim(), &RewardParams::default(), &tiny()).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(p1, p2);
        assert_eq!(l1.episodes.len(), 3);
        assert!(l1.episodes[2].eval_sr.is_some());
        assert!(l1.updates > 0);
    }

    #[test]
    fn log_csv_layout() {
        let log = TrainingLog {
            episodes: vec![EpisodeRecord {
                episode: 0,
                ret: -1.5,
                steps: 7,
                outcome: Status::Collision,
                eval_sr: None,
            }],
            total_steps: 7,
            updates: 0,
        };
        let mut out = Vec::new();
        write_training_log(&log, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), format!("{TRAINING_LOG_HEADER}\n0,-1.5,7,collision,\n"));
    }

    #[test]
    fn mismatched_sim_is_rejected() {
        let s = builtin("train").unwrap();
        let (p, _) = train(&s, &sim(), &RewardParams::default(), &TrainConfig { episodes: 1, ..tiny() }).unwrap();
        let other = SimParams::default();
        assert!(matches!(
            run_greedy_episode(&p, &s, &other, &RewardParams::default(), 0),
            Err(DdpgError::ObservationShape(_))
        ));
    }

    #[test]
    fn episode_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| episode_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
    }
}
