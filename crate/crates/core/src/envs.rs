//! Goal-conditioned toy environments with sparse `{-1, 0}` rewards.
//!
//! * `aubo_reach`: four revolute joints (shoulder, upper arm, forearm,
//!   wrist 1) driven by joint-angle increments. Success when the summed
//!   absolute joint error is below 0.1 rad.
//! * `point_reach`: a planar point moved by position increments.
//! * `point_push`: the point carries a block while they overlap; the goal
//!   is a block position.
//! * `point_slide`: the point is confined to a launch strip and can only
//!   kick the block, which then glides with friction toward a far goal.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::rng::Rng;

pub const AUBO_JOINT_LIMIT: f64 = 1.7;
pub const AUBO_ACTION_SCALE: f64 = 0.2;
pub const AUBO_THRESHOLD: f64 = 0.1;
pub const AUBO_TRAINING_GOAL: [f64; 4] = [-0.503, 0.605, -1.676, 1.391];

pub const POINT_ACTION_SCALE: f64 = 0.05;
pub const POINT_THRESHOLD: f64 = 0.05;
pub const POINT_WORKSPACE: f64 = 0.5;
/// Agent/block contact distance for push and slide.
pub const CONTACT_RADIUS: f64 = 0.05;
/// Agent and goal spawn within this fraction of the workspace of the block in `point_push`.
pub const PUSH_SPAWN: f64 = 0.3;
/// Agent x-coordinate ceiling in `point_slide`.
pub const SLIDE_LAUNCH_X: f64 = -0.2;
pub const SLIDE_IMPULSE: f64 = 2.0;
pub const SLIDE_FRICTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    AuboReach,
    PointReach,
    PointPush,
    PointSlide,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::AuboReach => "aubo_reach",
            EnvKind::PointReach => "point_reach",
            EnvKind::PointPush => "point_push",
            EnvKind::PointSlide => "point_slide",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aubo_reach" => Ok(EnvKind::AuboReach),
            "point_reach" => Ok(EnvKind::PointReach),
            "point_push" => Ok(EnvKind::PointPush),
            "point_slide" => Ok(EnvKind::PointSlide),
            _ => Err(Error::Contract(format!(
                "unknown environment {s:?} (expected aubo_reach, point_reach, point_push or point_slide)"
            ))),
        }
    }
}

/// How far the achieved goal may be from the desired goal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// Sum of absolute differences.
    L1,
    /// Euclidean distance.
    L2,
}

/// Sparse binary reward: `0` when strictly within threshold, else `-1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardFn {
    pub metric: Metric,
    pub threshold: f64,
}

impl RewardFn {
    pub fn eval(&self, achieved: &[f64], goal: &[f64]) -> Result<f64> {
        check_len("reward goal", achieved.len(), goal.len())?;
        let dist = match self.metric {
            Metric::L1 => achieved.iter().zip(goal).map(|(a, g)| (a - g).abs()).sum(),
            Metric::L2 => achieved
                .iter()
                .zip(goal)
                .map(|(a, g)| (a - g) * (a - g))
                .sum::<f64>()
                .sqrt(),
        };
        Ok(if dist < self.threshold { 0.0 } else { -1.0 })
    }
}

/// User-facing environment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub horizon: usize,
    /// Overrides the default success threshold.
    pub success_threshold: Option<f64>,
    /// Overrides the half-width of the square point workspace.
    pub workspace: Option<f64>,
    /// `aubo_reach`: sample a fresh goal every episode instead of the fixed
    /// training goal.
    pub randomize_goal: bool,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            horizon: 100,
            success_threshold: None,
            workspace: None,
            randomize_goal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub goal_dim: usize,
    pub max_action: f64,
    pub horizon: usize,
    pub success_threshold: f64,
}

impl EnvSpec {
    pub fn reward_fn(&self) -> RewardFn {
        RewardFn {
            metric: match self.kind {
                EnvKind::AuboReach => Metric::L1,
                _ => Metric::L2,
            },
            threshold: self.success_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalObservation {
    pub state: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: GoalObservation,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum World {
    Aubo {
        joints: [f64; 4],
    },
    Point {
        pos: [f64; 2],
    },
    Push {
        agent: [f64; 2],
        block: [f64; 2],
    },
    Slide {
        agent: [f64; 2],
        block: [f64; 2],
        vel: [f64; 2],
    },
}

#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    config: EnvConfig,
    workspace: f64,
    world: World,
    goal: Vec<f64>,
    t: usize,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::Contract("horizon must be at least 1".into()));
        }
        let (state_dim, goal_dim, default_threshold) = match config.kind {
            EnvKind::AuboReach => (4, 4, AUBO_THRESHOLD),
            EnvKind::PointReach => (2, 2, POINT_THRESHOLD),
            EnvKind::PointPush => (6, 2, POINT_THRESHOLD),
            EnvKind::PointSlide => (8, 2, POINT_THRESHOLD),
        };
        let threshold = config.success_threshold.unwrap_or(default_threshold);
        if !(threshold > 0.0) {
            return Err(Error::Contract("success threshold must be positive".into()));
        }
        let workspace = config.workspace.unwrap_or(POINT_WORKSPACE);
        if !(workspace > 0.0) {
            return Err(Error::Contract("workspace must be positive".into()));
        }
        let spec = EnvSpec {
            kind: config.kind,
            state_dim,
            action_dim: goal_dim,
            goal_dim,
            max_action: 1.0,
            horizon: config.horizon,
            success_threshold: threshold,
        };
        let world = match config.kind {
            EnvKind::AuboReach => World::Aubo { joints: [0.0; 4] },
            EnvKind::PointReach => World::Point { pos: [0.0; 2] },
            EnvKind::PointPush => World::Push {
                agent: [0.0; 2],
                block: [0.0; 2],
            },
            EnvKind::PointSlide => World::Slide {
                agent: [0.0; 2],
                block: [0.0; 2],
                vel: [0.0; 2],
            },
        };
        Ok(Self {
            spec,
            config,
            workspace,
            world,
            goal: vec![0.0; goal_dim],
            // Stepping before the first reset is a contract violation.
            t: usize::MAX,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reward_fn(&self) -> RewardFn {
        self.spec.reward_fn()
    }

    /// Steps taken since the last reset.
    pub fn elapsed(&self) -> usize {
        self.t
    }

    pub fn reset(&mut self, rng: &mut Rng) -> GoalObservation {
        let w = self.workspace;
        let mut square = |lo: f64, hi: f64| [rng.uniform(lo, hi), rng.uniform(lo, hi)];
        match &mut self.world {
            World::Aubo { joints } => {
                for j in joints.iter_mut() {
                    *j = rng.uniform(-AUBO_JOINT_LIMIT, AUBO_JOINT_LIMIT);
                }
                self.goal = if self.config.randomize_goal {
                    (0..4)
                        .map(|_| rng.uniform(-AUBO_JOINT_LIMIT, AUBO_JOINT_LIMIT))
                        .collect()
                } else {
                    AUBO_TRAINING_GOAL.to_vec()
                };
            }
            World::Point { pos } => {
                *pos = square(-w, w);
                self.goal = square(-w, w).to_vec();
            }
            World::Push { agent, block } => {
                *block = square(-0.6 * w, 0.6 * w);
                let near = |c: f64, rng: &mut Rng, lim: f64| {
                    (c + rng.uniform(-PUSH_SPAWN * w, PUSH_SPAWN * w)).clamp(-lim, lim)
                };
                *agent = [near(block[0], rng, w), near(block[1], rng, w)];
                self.goal = vec![near(block[0], rng, 0.6 * w), near(block[1], rng, 0.6 * w)];
            }
            World::Slide { agent, block, vel } => {
                let lx = SLIDE_LAUNCH_X.min(w);
                *agent = [rng.uniform(-w, lx), rng.uniform(-0.4 * w, 0.4 * w)];
                *block = [
                    rng.uniform(lx - 0.3 * w, lx - 0.1 * w),
                    rng.uniform(-0.4 * w, 0.4 * w),
                ];
                *vel = [0.0; 2];
                self.goal = vec![
                    rng.uniform(0.2 * w, 0.8 * w),
                    rng.uniform(-0.6 * w, 0.6 * w),
                ];
            }
        }
        self.t = 0;
        self.observe()
    }

    /// Advance one step. Action components are clipped to `±max_action`.
    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.t >= self.spec.horizon {
            return Err(Error::Contract(if self.t == usize::MAX {
                "step before reset".into()
            } else {
                format!("step past horizon {}", self.spec.horizon)
            }));
        }
        check_len("action", self.spec.action_dim, action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Contract("non-finite action".into()));
        }
        let m = self.spec.max_action;
        let a: Vec<f64> = action.iter().map(|x| x.clamp(-m, m)).collect();
        let w = self.workspace;

        match &mut self.world {
            World::Aubo { joints } => {
                for (j, da) in joints.iter_mut().zip(&a) {
                    *j = (*j + AUBO_ACTION_SCALE * da).clamp(-AUBO_JOINT_LIMIT, AUBO_JOINT_LIMIT);
                }
            }
            World::Point { pos } => {
                move_point(pos, &a, [-w, -w], [w, w]);
            }
            World::Push { agent, block } => {
                let delta = move_point(agent, &a, [-w, -w], [w, w]);
                if dist(agent, block) < CONTACT_RADIUS {
                    for i in 0..2 {
                        block[i] = (block[i] + delta[i]).clamp(-w, w);
                    }
                }
            }
            World::Slide { agent, block, vel } => {
                let lx = SLIDE_LAUNCH_X.min(w);
                let delta = move_point(agent, &a, [-w, -w], [lx, w]);
                if block[0] <= lx && dist(agent, block) < CONTACT_RADIUS {
                    *vel = [SLIDE_IMPULSE * delta[0], SLIDE_IMPULSE * delta[1]];
                }
                for i in 0..2 {
                    let next = block[i] + vel[i];
                    if next.abs() > w {
                        vel[i] = 0.0;
                    }
                    block[i] = next.clamp(-w, w);
                    vel[i] *= SLIDE_FRICTION;
                }
            }
        }
        self.t += 1;
        let obs = self.observe();
        let reward = self
            .reward_fn()
            .eval(&obs.achieved_goal, &obs.desired_goal)?;
        Ok(StepResult {
            obs,
            reward,
            done: self.t == self.spec.horizon,
            success: reward == 0.0,
        })
    }

    /// Current observation without stepping.
    pub fn observation(&self) -> GoalObservation {
        self.observe()
    }

    fn observe(&self) -> GoalObservation {
        let (state, achieved) = match &self.world {
            World::Aubo { joints } => (joints.to_vec(), joints.to_vec()),
            World::Point { pos } => (pos.to_vec(), pos.to_vec()),
            World::Push { agent, block } => (
                vec![
                    agent[0],
                    agent[1],
                    block[0],
                    block[1],
                    block[0] - agent[0],
                    block[1] - agent[1],
                ],
                block.to_vec(),
            ),
            World::Slide { agent, block, vel } => (
                vec![
                    agent[0],
                    agent[1],
                    block[0],
                    block[1],
                    block[0] - agent[0],
                    block[1] - agent[1],
                    vel[0],
                    vel[1],
                ],
                block.to_vec(),
            ),
        };
        GoalObservation {
            state,
            achieved_goal: achieved,
            desired_goal: self.goal.clone(),
        }
    }
}

/// Move by `POINT_ACTION_SCALE · a` inside the box; returns the actual displacement.
fn move_point(p: &mut [f64; 2], a: &[f64], lo: [f64; 2], hi: [f64; 2]) -> [f64; 2] {
    let mut delta = [0.0; 2];
    for i in 0..2 {
        let next = (p[i] + POINT_ACTION_SCALE * a[i]).clamp(lo[i], hi[i]);
        delta[i] = next - p[i];
        p[i] = next;
    }
    delta
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Free-function form of [`RewardFn::eval`] for an environment kind with
/// its default threshold.
pub fn reward_fn(kind: EnvKind, achieved: &[f64], goal: &[f64]) -> Result<f64> {
    Env::new(EnvConfig::new(kind))?
        .reward_fn()
        .eval(achieved, goal)
}
