//! Reward shaping for collision avoidance plus the discrete snake energy.
//!
//! The per-step reward is `margin + towards + smooth + {goal | collision |
//! flight}`. The margin term is a two-zone repulsion around obstacles, the
//! towards term is the cosine between heading and the direction to goal, and
//! the smoothness term penalizes non-collinear or unevenly spaced consecutive
//! positions. [`snake_energy`] is the squared-norm functional the smoothness
//! term is derived from; [`snake_smooth`] minimizes it and serves as an
//! oracle for what "smooth" means.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Below this speed the flight direction is undefined.
pub const MIN_SPEED: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("snake energy needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("descent diverged at iteration {iteration}; reduce step_size")]
    Diverged { iteration: usize },
    #[error("invalid reward parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    #[serde(rename = "C1")]
    pub c1: f64,
    /// Hard-zone strength; `None` means `C1 * d_hard`, which makes the
    /// margin field continuous at `d_hard`.
    #[serde(rename = "C2")]
    pub c2: Option<f64>,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
    pub d_soft: f64,
    pub d_hard: f64,
    #[serde(rename = "R_g")]
    pub r_goal: f64,
    #[serde(rename = "R_c")]
    pub r_collision: f64,
    pub c_fwd: f64,
    pub c_dev: f64,
    pub eps_d: f64,
    pub smooth_enabled: bool,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            c1: 2.0,
            c2: None,
            c3: 2.0,
            c4: 2.0,
            d_soft: 2.0,
            d_hard: 0.5,
            r_goal: 50.0,
            r_collision: -50.0,
            c_fwd: 1.0,
            c_dev: 0.1,
            eps_d: 0.01,
            smooth_enabled: true,
        }
    }
}

impl RewardParams {
    pub fn c2(&self) -> f64 {
        self.c2.unwrap_or(self.c1 * self.d_hard)
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: &str| Err(RewardError::InvalidParams(m.to_string()));
        if !(self.d_soft > self.d_hard && self.d_hard > 0.0) {
            return bad("require d_soft > d_hard > 0");
        }
        if self.eps_d <= 0.0 {
            return bad("eps_d must be positive");
        }
        if self.c1 <= 0.0 || self.c2() <= 0.0 || self.c3 <= 0.0 || self.c4 <= 0.0 {
            return bad("C1..C4 must be positive");
        }
        if self.r_goal <= 0.0 || self.r_collision >= 0.0 {
            return bad("R_g must be positive and R_c negative");
        }
        if self.c_fwd <= 0.0 || self.c_dev <= 0.0 {
            return bad("c_fwd and c_dev must be positive");
        }
        Ok(())
    }
}

/// Per-step reward components; `total` is their exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub margin: f64,
    pub towards: f64,
    pub smooth: f64,
    pub terminal_or_flight: f64,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn new(margin: f64, towards: f64, smooth: f64, terminal_or_flight: f64) -> Self {
        Self {
            margin,
            towards,
            smooth,
            terminal_or_flight,
            total: margin + towards + smooth + terminal_or_flight,
        }
    }
}

/// How the transition ended, as far as the composite reward cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Goal,
    Collision,
    Flight,
}

/// Everything the composite reward needs from one environment transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionContext {
    /// Clearance between the UAV hull and the nearest obstacle after the step.
    pub d_obs: f64,
    /// Unit vector to the goal, taken before the step.
    pub to_goal: Vec2,
    /// Velocity commanded for the step.
    pub velocity: Vec2,
    /// Position before the previous step, if there was one.
    pub p_prev: Option<Vec2>,
    pub p_curr: Vec2,
    pub p_next: Vec2,
    pub progress_delta: f64,
    pub deviation: f64,
}

pub fn margin_reward(d_obs: f64, p: &RewardParams) -> f64 {
    if d_obs >= p.d_soft {
        0.0
    } else if d_obs >= p.d_hard {
        -p.c1 * (p.d_soft - d_obs) / (p.d_soft - p.d_hard)
    } else {
        -p.c2() / d_obs.max(p.eps_d)
    }
}

/// Cosine of the angle between the goal direction and the velocity.
pub fn towards_reward(v_d: Vec2, v_vel: Vec2) -> f64 {
    let nd = v_d.norm();
    let nv = v_vel.norm();
    if nv < MIN_SPEED || nd == 0.0 {
        return 0.0;
    }
    (v_d.dot(v_vel) / (nd * nv)).clamp(-1.0, 1.0)
}

/// Collinearity defect plus second-difference magnitude, negated.
pub fn smooth_reward(p_prev: Vec2, p_curr: Vec2, p_next: Vec2, c3: f64, c4: f64) -> f64 {
    let defect = (p_curr - p_prev).norm() + (p_next - p_curr).norm() - (p_next - p_prev).norm();
    let second = (p_prev - p_curr * 2.0 + p_next).norm();
    // The defect is nonnegative up to rounding.
    -c3 * defect.max(0.0) - c4 * second
}

pub fn flight_reward(progress_delta: f64, deviation: f64, p: &RewardParams) -> f64 {
    p.c_fwd * progress_delta - p.c_dev * deviation
}

pub fn total_reward(ctx: &TransitionContext, outcome: Outcome, p: &RewardParams) -> RewardBreakdown {
    let margin = margin_reward(ctx.d_obs, p);
    let towards = towards_reward(ctx.to_goal, ctx.velocity);
    let smooth = match ctx.p_prev {
        Some(prev) if p.smooth_enabled => smooth_reward(prev, ctx.p_curr, ctx.p_next, p.c3, p.c4),
        _ => 0.0,
    };
    let last = match outcome {
        Outcome::Goal => p.r_goal,
        Outcome::Collision => p.r_collision,
        Outcome::Flight => flight_reward(ctx.progress_delta, ctx.deviation, p),
    };
    RewardBreakdown::new(margin, towards, smooth, last)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnakeEnergyParams {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for SnakeEnergyParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

/// `alpha * sum |p_t - p_{t-1}|^2 + beta * sum |p_{t-1} - 2 p_t + p_{t+1}|^2`.
pub fn snake_energy(points: &[Vec2], sp: SnakeEnergyParams) -> Result<f64, RewardError> {
    if points.len() < 2 {
        return Err(RewardError::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    let stretch: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm_sq()).sum();
    let bend: f64 = points
        .windows(3)
        .map(|w| (w[0] - w[1] * 2.0 + w[2]).norm_sq())
        .sum();
    Ok(sp.alpha * stretch + sp.beta * bend)
}

/// Analytic gradient of [`snake_energy`] with respect to every point.
pub fn snake_energy_gradient(points: &[Vec2], sp: SnakeEnergyParams) -> Vec<Vec2> {
    let n = points.len();
    let mut grad = vec![Vec2::ZERO; n];
    for t in 1..n {
        let d = (points[t] - points[t - 1]) * (2.0 * sp.alpha);
        grad[t] += d;
        grad[t - 1] -= d;
    }
    for t in 1..n.saturating_sub(1) {
        let s = (points[t - 1] - points[t] * 2.0 + points[t + 1]) * (2.0 * sp.beta);
        grad[t - 1] += s;
        grad[t] -= s * 2.0;
        grad[t + 1] += s;
    }
    grad
}

/// Gradient descent on the snake energy with pinned endpoints. Returns the
/// final points and the energy before the first and after every iteration.
pub fn snake_smooth_traced(
    points: &[Vec2],
    sp: SnakeEnergyParams,
    step_size: f64,
    iterations: usize,
) -> Result<(Vec<Vec2>, Vec<f64>), RewardError> {
    if points.len() < 3 {
        return Err(RewardError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    let mut pts = points.to_vec();
    let mut energies = Vec::with_capacity(iterations + 1);
    energies.push(snake_energy(&pts, sp)?);
    let last = pts.len() - 1;
    for iteration in 0..iterations {
        let grad = snake_energy_gradient(&pts, sp);
        for (p, g) in pts[1..last].iter_mut().zip(&grad[1..last]) {
            *p -= *g * step_size;
        }
        let e = snake_energy(&pts, sp)?;
        if !e.is_finite() || pts.iter().any(|p| !p.is_finite()) {
            return Err(RewardError::Diverged { iteration });
        }
        energies.push(e);
    }
    Ok((pts, energies))
}

pub fn snake_smooth(
    points: &[Vec2],
    sp: SnakeEnergyParams,
    step_size: f64,
    iterations: usize,
) -> Result<Vec<Vec2>, RewardError> {
    snake_smooth_traced(points, sp, step_size, iterations).map(|(p, _)| p)
}
