//! Episode environment: velocity-commanded UAV kinematics, ray-cast depth
//! sensing, observation assembly and termination.
//!
//! One [`Env`] is one episode. It is created by [`Env::reset`], advanced by
//! [`Env::step`] until the status leaves [`Status::Running`], and keeps a
//! row per step that [`write_trajectory_csv`] serializes.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{min_obstacle_distance, ray_cast, Vec2};
use crate::rewards::{total_reward, Outcome, RewardBreakdown, RewardParams, TransitionContext};
use crate::scene::{validate, Scene};

/// Heading is frozen when the commanded speed drops below this.
pub const HEADING_MIN_SPEED: f64 = 1e-6;

pub const TRAJECTORY_CSV_HEADER: &str =
    "step,t,x,y,vx,vy,d_obs,deviation,r_margin,r_towards,r_smooth,r_flight,r_total,status";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {}", .0.join("; "))]
    InvalidScene(Vec<String>),
    #[error("invalid sim parameters: {0}")]
    InvalidParams(String),
    #[error("episode ended")]
    EpisodeEnded,
    #[error("non-finite action ({0}, {1})")]
    NonFiniteAction(f64, f64),
    #[error("trajectory line {line}: {message}")]
    TrajectoryParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Whether observations carry the raw or the truncated depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthMode {
    Deep,
    Shallow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub dt: f64,
    pub v_max: f64,
    pub uav_radius: f64,
    pub goal_radius: f64,
    pub max_steps: usize,
    pub fov: f64,
    pub n_rays: usize,
    /// Shallow-depth cap.
    pub d_trunc: f64,
    pub d_max_sensor: f64,
    /// Number of consecutive depth frames in an observation.
    pub k_stack: usize,
    pub depth_mode: DepthMode,
    /// Radius of the seeded uniform perturbation of the start position.
    pub start_jitter: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 2.0,
            uav_radius: 0.3,
            goal_radius: 0.5,
            max_steps: 500,
            fov: FRAC_PI_2,
            n_rays: 32,
            d_trunc: 5.0,
            d_max_sensor: 20.0,
            k_stack: 4,
            depth_mode: DepthMode::Shallow,
            start_jitter: 0.0,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidParams(m.to_string()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.v_max > 0.0) {
            return bad("v_max must be positive");
        }
        if !(self.uav_radius >= 0.0) || !(self.goal_radius > 0.0) {
            return bad("uav_radius must be nonnegative and goal_radius positive");
        }
        if !(self.d_trunc > 0.0 && self.d_trunc <= self.d_max_sensor) {
            return bad("require 0 < d_trunc <= d_max_sensor");
        }
        if self.n_rays < 2 {
            return bad("n_rays must be at least 2");
        }
        if self.k_stack < 1 {
            return bad("k_stack must be at least 1");
        }
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1");
        }
        if !(self.fov > 0.0 && self.fov < std::f64::consts::TAU) {
            return bad("fov must lie in (0, 2pi)");
        }
        if !(0.0..=0.5).contains(&self.start_jitter) {
            return bad("start_jitter must lie in [0, 0.5]");
        }
        Ok(())
    }

    /// The value observations are divided by before entering a network.
    pub fn depth_cap(&self) -> f64 {
        match self.depth_mode {
            DepthMode::Deep => self.d_max_sensor,
            DepthMode::Shallow => self.d_trunc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UavState {
    pub pos: Vec2,
    pub vel: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub rays: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Oldest frame first.
    pub depth_stack: Vec<DepthFrame>,
    pub vel: Vec2,
    pub unit_to_goal: Vec2,
    /// Euclidean distance to the goal; only the distance-signal policy reads it.
    pub dist_to_goal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Goal,
    Collision,
    OutOfBounds,
    Timeout,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Goal => "goal",
            Status::Collision => "collision",
            Status::OutOfBounds => "out_of_bounds",
            Status::Timeout => "timeout",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "running" => Status::Running,
            "goal" => Status::Goal,
            "collision" => Status::Collision,
            "out_of_bounds" => Status::OutOfBounds,
            "timeout" => Status::Timeout,
            other => return Err(format!("unknown status '{other}'")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Hull clearance to the nearest obstacle (signed distance minus radius).
    pub d_obs: f64,
    pub deviation: f64,
    pub progress_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: RewardBreakdown,
    pub status: Status,
    pub info: StepInfo,
}

/// One row of the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub t: f64,
    pub pos: Vec2,
    pub vel: Vec2,
    pub d_obs: f64,
    pub deviation: f64,
    pub reward: RewardBreakdown,
    pub status: Status,
}

pub fn truncate_depth(frame: &DepthFrame, d_trunc: f64) -> DepthFrame {
    DepthFrame {
        rays: frame.rays.iter().map(|&r| r.min(d_trunc)).collect(),
    }
}

/// Unit vector from `pos` to `goal`, zero inside the goal radius.
pub fn unit_to_goal(pos: Vec2, goal: Vec2, goal_radius: f64) -> Vec2 {
    let d = goal - pos;
    if d.norm() <= goal_radius {
        Vec2::ZERO
    } else {
        d.normalized().unwrap_or(Vec2::ZERO)
    }
}

/// Fan of `n_rays` casts spanning `heading +- fov/2`, clamped to the sensor range.
pub fn render_depth(scene: &Scene, pos: Vec2, heading: f64, params: &SimParams) -> DepthFrame {
    let n = params.n_rays;
    let rays = (0..n)
        .map(|i| {
            let theta = heading - params.fov / 2.0 + params.fov * i as f64 / (n - 1) as f64;
            ray_cast(
                pos,
                Vec2::from_angle(theta),
                &scene.obstacles,
                &scene.bounds,
                params.d_max_sensor,
            )
            .expect("from_angle yields unit vectors")
        })
        .collect();
    DepthFrame { rays }
}

/// Hull clearance; `+inf` in an obstacle-free scene.
pub fn hull_clearance(scene: &Scene, pos: Vec2, uav_radius: f64) -> f64 {
    min_obstacle_distance(pos, &scene.obstacles)
        .map(|(d, _)| d - uav_radius)
        .unwrap_or(f64::INFINITY)
}

/// A running episode.
#[derive(Debug, Clone)]
pub struct Env {
    scene: Scene,
    params: SimParams,
    rewards: RewardParams,
    state: UavState,
    prev_pos: Option<Vec2>,
    stack: VecDeque<DepthFrame>,
    steps: usize,
    status: Status,
    log: Vec<LogRow>,
}

impl Env {
    pub fn reset(
        scene: &Scene,
        params: &SimParams,
        rewards: &RewardParams,
        seed: u64,
    ) -> Result<(Env, Observation), SimError> {
        let violations = validate(scene);
        if !violations.is_empty() {
            return Err(SimError::InvalidScene(violations));
        }
        params.validate()?;

        let mut pos = scene.start;
        if params.start_jitter > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = params.start_jitter * rng.random::<f64>().sqrt();
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            pos += Vec2::from_angle(theta) * r;
        }
        let heading = (scene.goal - pos).angle();
        let state = UavState {
            pos,
            vel: Vec2::ZERO,
            heading,
        };
        let frame = sense(scene, &state, params);
        let stack: VecDeque<DepthFrame> = std::iter::repeat_n(frame, params.k_stack).collect();
        let d_obs = hull_clearance(scene, pos, params.uav_radius);
        let deviation = scene.project_onto_route(pos).deviation;
        let env = Env {
            scene: scene.clone(),
            params: params.clone(),
            rewards: rewards.clone(),
            state,
            prev_pos: None,
            stack,
            steps: 0,
            status: Status::Running,
            log: vec![LogRow {
                step: 0,
                t: 0.0,
                pos,
                vel: Vec2::ZERO,
                d_obs,
                deviation,
                reward: RewardBreakdown::default(),
                status: Status::Running,
            }],
        };
        let obs = env.observation();
        Ok((env, obs))
    }

    pub fn step(&mut self, action: Vec2) -> Result<StepResult, SimError> {
        if self.status.is_terminal() {
            return Err(SimError::EpisodeEnded);
        }
        if !action.is_finite() {
            return Err(SimError::NonFiniteAction(action.x, action.y));
        }
        let p = &self.params;
        let vel = action.clamp_norm(p.v_max);
        let p_curr = self.state.pos;
        let p_next = p_curr + vel * p.dt;
        let to_goal = unit_to_goal(p_curr, self.scene.goal, p.goal_radius);

        let heading = if vel.norm() > HEADING_MIN_SPEED {
            vel.angle()
        } else {
            self.state.heading
        };
        self.state = UavState {
            pos: p_next,
            vel,
            heading,
        };
        self.steps += 1;

        let d_obs = hull_clearance(&self.scene, p_next, p.uav_radius);
        let before = self.scene.project_onto_route(p_curr);
        let after = self.scene.project_onto_route(p_next);
        let status = if d_obs <= 0.0 {
            Status::Collision
        } else if !self.scene.bounds.contains(p_next) {
            Status::OutOfBounds
        } else if p_next.distance(self.scene.goal) <= p.goal_radius {
            Status::Goal
        } else if self.steps >= p.max_steps {
            Status::Timeout
        } else {
            Status::Running
        };
        let outcome = match status {
            Status::Goal => Outcome::Goal,
            // Leaving the container is hitting its wall.
            Status::Collision | Status::OutOfBounds => Outcome::Collision,
            Status::Running | Status::Timeout => Outcome::Flight,
        };
        let ctx = TransitionContext {
            d_obs,
            to_goal,
            velocity: vel,
            p_prev: self.prev_pos,
            p_curr,
            p_next,
            progress_delta: after.s - before.s,
            deviation: after.deviation,
        };
        let reward = total_reward(&ctx, outcome, &self.rewards);
        self.prev_pos = Some(p_curr);
        self.status = status;

        if self.scene.bounds.contains(p_next) {
            let frame = sense(&self.scene, &self.state, &self.params);
            self.stack.pop_front();
            self.stack.push_back(frame);
        } else {
            // Outside the walls the camera sees nothing meaningful; repeat
            // the last frame so the terminal observation stays well-formed.
            let last = self.stack.back().cloned().expect("k_stack >= 1");
            self.stack.pop_front();
            self.stack.push_back(last);
        }

        self.log.push(LogRow {
            step: self.steps,
            t: self.steps as f64 * self.params.dt,
            pos: p_next,
            vel,
            d_obs,
            deviation: after.deviation,
            reward,
            status,
        });

        Ok(StepResult {
            obs: self.observation(),
            reward,
            status,
            info: StepInfo {
                d_obs,
                deviation: after.deviation,
                progress_delta: after.s - before.s,
            },
        })
    }

    pub fn observation(&self) -> Observation {
        Observation {
            depth_stack: self.stack.iter().cloned().collect(),
            vel: self.state.vel,
            unit_to_goal: unit_to_goal(self.state.pos, self.scene.goal, self.params.goal_radius),
            dist_to_goal: self.state.pos.distance(self.scene.goal),
        }
    }

    pub fn state(&self) -> UavState {
        self.state
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn into_log(self) -> Vec<LogRow> {
        self.log
    }
}

fn sense(scene: &Scene, state: &UavState, params: &SimParams) -> DepthFrame {
    let frame = render_depth(scene, state.pos, state.heading, params);
    match params.depth_mode {
        DepthMode::Deep => frame,
        DepthMode::Shallow => truncate_depth(&frame, params.d_trunc),
    }
}

pub fn write_trajectory_csv<W: Write>(rows: &[LogRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.t,
            r.pos.x,
            r.pos.y,
            r.vel.x,
            r.vel.y,
            r.d_obs,
            r.deviation,
            r.reward.margin,
            r.reward.towards,
            r.reward.smooth,
            r.reward.terminal_or_flight,
            r.reward.total,
            r.status
        )?;
    }
    Ok(())
}

pub fn read_trajectory_csv<R: BufRead>(input: R) -> Result<Vec<LogRow>, SimError> {
    let mut rows = Vec::new();
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    match header {
        Some(h) if h.trim_end() == TRAJECTORY_CSV_HEADER => {}
        _ => {
            return Err(SimError::TrajectoryParse {
                line: 1,
                message: format!("expected header '{TRAJECTORY_CSV_HEADER}'"),
            })
        }
    }
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| SimError::TrajectoryParse {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 14 {
            return Err(err(format!("expected 14 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64, SimError> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| err(format!("column {}: {e}", i + 1)))
        };
        let step = fields[0]
            .parse::<usize>()
            .map_err(|e| err(format!("column 1: {e}")))?;
        let status = fields[13].parse::<Status>().map_err(err)?;
        rows.push(LogRow {
            step,
            t: num(1)?,
            pos: Vec2::new(num(2)?, num(3)?),
            vel: Vec2::new(num(4)?, num(5)?),
            d_obs: num(6)?,
            deviation: num(7)?,
            reward: RewardBreakdown {
                margin: num(8)?,
                towards: num(9)?,
                smooth: num(10)?,
                terminal_or_flight: num(11)?,
                total: num(12)?,
            },
            status,
        });
    }
    if rows.is_empty() {
        return Err(SimError::TrajectoryParse {
            line: 2,
            message: "no rows".into(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ObstacleShape;
    use crate::scene::{builtin, empty};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn defaults() -> (SimParams, RewardParams) {
        (SimParams::default(), RewardParams::default())
    }

    #[test]
    fn reset_is_deterministic_and_starts_at_rest() {
        let (sp, rp) = defaults();
        let s = builtin("train").unwrap();
        let (_, a) = Env::reset(&s, &sp, &rp, 7).unwrap();
        let (env, b) = Env::reset(&s, &sp, &rp, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.vel, Vec2::ZERO);
        assert_eq!(env.state().pos, s.start);
        assert_abs_diff_eq!(a.unit_to_goal.distance(s.route_direction()), 0.0, epsilon = 1e-12);
        assert_eq!(a.depth_stack.len(), sp.k_stack);
        assert!(a.depth_stack.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn reset_rejects_invalid_scene() {
        let (sp, rp) = defaults();
        let mut s = builtin("train").unwrap();
        s.goal = s.start;
        assert!(matches!(Env::reset(&s, &sp, &rp, 0), Err(SimError::InvalidScene(_))));
    }

    #[test]
    fn start_jitter_is_seeded() {
        let (mut sp, rp) = defaults();
        sp.start_jitter = 0.4;
        let s = builtin("train").unwrap();
        let p = |seed| Env::reset(&s, &sp, &rp, seed).unwrap().0.state().pos;
        assert_eq!(p(3), p(3));
        assert_ne!(p(3), p(4));
        assert!(p(3).distance(s.start) <= 0.4);
    }

    #[test]
    fn zero_action_holds_position() {
        let (sp, rp) = defaults();
        let s = builtin("train").unwrap();
        let (mut env, _) = Env::reset(&s, &sp, &rp, 0).unwrap();
        let r = env.step(Vec2::ZERO).unwrap();
        assert_eq!(env.state().pos, s.start);
        assert_eq!(r.status, Status::Running);
        assert_eq!(env.state().heading, (s.goal - s.start).angle());
    }

    #[test]
    fn flying_at_goal_in_empty_scene_approaches_monotonically_and_arrives() {
        let (sp, rp) = defaults();
        let s = empty("empty");
        let (mut env, mut obs) = Env::reset(&s, &sp, &rp, 0).unwrap();
        let mut dist = env.state().pos.distance(s.goal);
        loop {
            let r = env.step(obs.unit_to_goal * sp.v_max).unwrap();
            let d = env.state().pos.distance(s.goal);
            assert!(d < dist);
            dist = d;
            obs = r.obs;
            if r.status != Status::Running {
                assert_eq!(r.status, Status::Goal);
                assert_eq!(r.reward.terminal_or_flight, rp.r_goal);
                break;
            }
        }
    }

    #[test]
    fn driving_into_obstacle_collides() {
        let (sp, rp) = defaults();
        let mut s = empty("probe");
        let c = Vec2::new(10.0, 7.5);
        s.obstacles.push(ObstacleShape::disc(c, 1.0));
        let (mut env, _) = Env::reset(&s, &sp, &rp, 0).unwrap();
        // Teleport by stepping: put the hull 0.1 m from the disc.
        let target = Vec2::new(c.x - 1.0 - sp.uav_radius - 0.1, c.y);
        while env.state().pos.distance(target) > 1e-9 {
            let d = target - env.state().pos;
            env.step(d.clamp_norm(sp.v_max * sp.dt) / sp.dt).unwrap();
        }
        assert_abs_diff_eq!(hull_clearance(&s, env.state().pos, sp.uav_radius), 0.1, epsilon = 1e-9);
        // 0.2 m toward the disc.
        let r = env.step(Vec2::new(2.0, 0.0)).unwrap();
        assert_eq!(r.status, Status::Collision);
        assert!(r.info.d_obs <= 0.0);
        assert_eq!(r.reward.terminal_or_flight, rp.r_collision);
        assert!(matches!(env.step(Vec2::ZERO), Err(SimError::EpisodeEnded)));
    }

    #[test]
    fn action_is_clamped_to_v_max() {
        let (sp, rp) = defaults();
        let s = empty("e");
        let (mut env, _) = Env::reset(&s, &sp, &rp, 0).unwrap();
        env.step(Vec2::new(30.0, 40.0)).unwrap();
        assert_abs_diff_eq!(env.state().vel.norm(), sp.v_max, epsilon = 1e-12);
        assert_abs_diff_eq!(env.state().pos.distance(s.start), sp.v_max * sp.dt, epsilon = 1e-12);
    }

    #[test]
    fn timeout_and_out_of_bounds() {
        let (mut sp, rp) = defaults();
        sp.max_steps = 3;
        let s = empty("e");
        let (mut env, _) = Env::reset(&s, &sp, &rp, 0).unwrap();
        let statuses: Vec<Status> = (0..3).map(|_| env.step(Vec2::ZERO).unwrap().status).collect();
        assert_eq!(statuses, [Status::Running, Status::Running, Status::Timeout]);

        let sp = SimParams::default();
        let (mut env, _) = Env::reset(&s, &sp, &rp, 0).unwrap();
        let mut last = Status::Running;
        for _ in 0..20 {
            last = env.step(Vec2::new(-2.0, 0.0)).unwrap().status;
            if last != Status::Running {
                break;
            }
        }
        assert_eq!(last, Status::OutOfBounds);
    }

    #[test]
    fn depth_rendering_examples() {
        let sp = SimParams {
            d_max_sensor: 4.0,
            d_trunc: 4.0,
            ..SimParams::default()
        };
        // Walls 5+ m from the center in every direction.
        let mut s = empty("e");
        s.start = Vec2::new(10.0, 7.5);
        s.goal = Vec2::new(19.0, 7.5);
        let f = render_depth(&s, s.start, 0.0, &sp);
        assert!(f.rays.iter().all(|&r| r == 4.0));

        let sp = SimParams {
            n_rays: 33,
            ..SimParams::default()
        };
        s.obstacles.push(ObstacleShape::disc(Vec2::new(15.0, 7.5), 1.0));
        let f = render_depth(&s, s.start, 0.0, &sp);
        assert_abs_diff_eq!(f.rays[16], 4.0, epsilon = 1e-12);
        for i in 0..33 {
            assert_abs_diff_eq!(f.rays[i], f.rays[32 - i], epsilon = 1e-9);
        }
    }

    #[test]
    fn truncate_examples() {
        let f = DepthFrame {
            rays: vec![2.0, 8.0, 15.0],
        };
        let t = truncate_depth(&f, 6.0);
        assert_eq!(t.rays, vec![2.0, 6.0, 6.0]);
        assert_eq!(truncate_depth(&t, 6.0), t);
        assert_eq!(truncate_depth(&f, 20.0), f);
    }

    #[test]
    fn unit_to_goal_examples() {
        let u = unit_to_goal(Vec2::ZERO, Vec2::new(3.0, 4.0), 0.5);
        assert_abs_diff_eq!(u.x, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(u.y, 0.8, epsilon = 1e-12);
        assert_eq!(unit_to_goal(Vec2::new(2.9, 4.0), Vec2::new(3.0, 4.0), 0.5), Vec2::ZERO);
        let scaled = unit_to_goal(Vec2::new(10.0, -20.0), Vec2::new(30.0, 40.0) * 10.0, 0.5);
        let base = unit_to_goal(Vec2::new(1.0, -2.0), Vec2::new(30.0, 40.0), 0.5);
        assert_abs_diff_eq!(scaled.distance(base), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shallow_observation_ignores_far_obstacle_edits() {
        let (sp, rp) = defaults();
        let base = builtin("train").unwrap();
        let mut edited = base.clone();
        // Replace the last hexagon with a disc in plain view but more than
        // d_trunc + v_max*dt from the start.
        let far = edited.obstacles.len() - 1;
        edited.obstacles[far] = ObstacleShape::disc(Vec2::new(9.0, 13.0), 0.5);
        let (mut a, oa) = Env::reset(&base, &sp, &rp, 0).unwrap();
        let (mut b, ob) = Env::reset(&edited, &sp, &rp, 0).unwrap();
        assert_eq!(oa, ob);
        let ra = a.step(Vec2::new(1.0, 0.5)).unwrap();
        let rb = b.step(Vec2::new(1.0, 0.5)).unwrap();
        assert_eq!(ra.obs, rb.obs);

        let deep = SimParams {
            depth_mode: DepthMode::Deep,
            ..sp
        };
        let (_, da) = Env::reset(&base, &deep, &rp, 0).unwrap();
        let (_, db) = Env::reset(&edited, &deep, &rp, 0).unwrap();
        assert_ne!(da, db);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let (sp, rp) = defaults();
        let s = builtin("ts1").unwrap();
        let (mut env, _) = Env::reset(&s, &sp, &rp, 0).unwrap();
        for k in 0..30 {
            if env.step(Vec2::new(2.0, 0.1 * (k % 3) as f64)).unwrap().status.is_terminal() {
                break;
            }
        }
        let mut buf = Vec::new();
        write_trajectory_csv(env.log(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(TRAJECTORY_CSV_HEADER));
        let back = read_trajectory_csv(buf.as_slice()).unwrap();
        assert_eq!(back, env.log());
    }

    #[test]
    fn trajectory_csv_rejects_bad_rows() {
        let bad = format!("{TRAJECTORY_CSV_HEADER}\n0,0,1,2,0,0,x,0,0,0,0,0,0,running\n");
        let err = read_trajectory_csv(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, SimError::TrajectoryParse { line: 2, .. }), "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn steps_are_bounded_and_episodes_terminate(actions in proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..40)) {
            let sp = SimParams { max_steps: 25, ..SimParams::default() };
            let rp = RewardParams::default();
            let s = builtin("train").unwrap();
            let (mut env, _) = Env::reset(&s, &sp, &rp, 1).unwrap();
            let mut i = 0;
            while env.status() == Status::Running {
                let (x, y) = actions[i % actions.len()];
                let before = env.state().pos;
                let r = env.step(Vec2::new(x, y)).unwrap();
                prop_assert!(env.state().pos.distance(before) <= sp.v_max * sp.dt + 1e-12);
                prop_assert!(env.state().vel.norm() <= sp.v_max + 1e-9);
                prop_assert_eq!(r.reward.total, r.reward.margin + r.reward.towards + r.reward.smooth + r.reward.terminal_or_flight);
                i += 1;
            }
            prop_assert!(env.steps() <= sp.max_steps);
        }
    }
}
