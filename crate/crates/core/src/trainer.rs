//! The training loop: exploratory rollouts, hindsight relabeling, minibatch
//! optimization of the ensemble, soft target tracking and evaluation.

use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::envs::{Env, EnvConfig, GoalObservation};
use crate::error::{Error as CoreError, Result};
use crate::linalg::Mat;
use crate::networks::{AdcpSpec, Batch, Ensemble, NetShape};
use crate::normalizer::{Normalizer, DEFAULT_CLIP};
use crate::replay::{her_expand, Episode, ReplayBuffer, Transition, TransitionDims};
use crate::rng::{Rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adcp: AdcpSpec,
    pub env: EnvConfig,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub cycles_per_epoch: usize,
    /// Environment steps per cycle; a multiple of the episode horizon.
    pub rollout_steps: usize,
    pub opt_steps_per_cycle: usize,
    pub batch_size: usize,
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Variance of the Gaussian exploration noise.
    pub noise_var: f64,
    pub her_k: usize,
    pub buffer_capacity: usize,
    /// Coefficient of the squared-weight penalty on the critics.
    pub l2_coeff: f64,
    /// Coefficient of the squared normalized action penalty on the actors.
    pub action_l2: f64,
    pub clip_range: f64,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(adcp: AdcpSpec, env: EnvConfig) -> Self {
        Self {
            adcp,
            env,
            hidden: vec![256, 256, 256],
            epochs: 25,
            cycles_per_epoch: 15,
            rollout_steps: 100,
            opt_steps_per_cycle: 20,
            batch_size: 256,
            gamma: 0.98,
            tau: 0.01,
            actor_lr: 0.001,
            critic_lr: 0.001,
            noise_var: 0.2,
            her_k: 4,
            buffer_capacity: 1_000_000,
            l2_coeff: 1e-3,
            action_l2: 1.0,
            clip_range: DEFAULT_CLIP,
            eval_episodes: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Contract(msg));
        let counts = [
            ("epochs", self.epochs),
            ("cycles_per_epoch", self.cycles_per_epoch),
            ("rollout_steps", self.rollout_steps),
            ("opt_steps_per_cycle", self.opt_steps_per_cycle),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_episodes", self.eval_episodes),
            ("horizon", self.env.horizon),
        ];
        for (name, v) in counts {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.rollout_steps % self.env.horizon != 0 {
            return bad(format!(
                "rollout_steps {} is not a multiple of the horizon {}",
                self.rollout_steps, self.env.horizon
            ));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.noise_var >= 0.0 && self.l2_coeff >= 0.0 && self.action_l2 >= 0.0) {
            return bad("noise variance and penalties must be non-negative".into());
        }
        if !(self.clip_range > 0.0) {
            return bad("clip_range must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        AdcpSpec::new(self.adcp.d, self.adcp.p).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch index.
    pub epoch: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_q: f64,
}

/// Running totals used for schedule bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub env_steps: u64,
    pub opt_steps: u64,
    pub transitions_stored: u64,
    pub cycles: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Debug, Error)]
#[error("training diverged at epoch {epoch}, cycle {cycle} (last stable epoch: {}): {source}",
    .last_stable_epoch.map_or("none".to_string(), |e| e.to_string()))]
pub struct TrainError {
    pub epoch: usize,
    pub cycle: usize,
    /// Last epoch whose end-of-epoch state was finite; its checkpoint is the
    /// one to fall back to.
    pub last_stable_epoch: Option<usize>,
    #[source]
    pub source: CoreError,
}

pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub checkpoint: Checkpoint,
    pub counters: Counters,
}

/// `clip(μ̄(norm(s ‖ g)) + ε, ±max_action)` with `ε ~ N(0, noise_var)` per component.
pub fn explore_action(
    ens: &Ensemble,
    norm: &Normalizer,
    obs: &GoalObservation,
    noise_var: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let x = norm.obs(&obs.state, &obs.desired_goal);
    let mut a = ens.actor_avg(&x, false)?;
    let std = noise_var.sqrt();
    let m = ens.max_action();
    for v in &mut a {
        *v = (*v + rng.gaussian(0.0, std)).clamp(-m, m);
    }
    Ok(a)
}

/// `l2_coeff × Σ w²` over all critic weight matrices.
pub fn critic_l2(ens: &Ensemble, l2_coeff: f64) -> f64 {
    ens.critic_l2(l2_coeff)
}

/// Normalized network inputs for a list of transitions.
pub fn make_batch(norm: &Normalizer, transitions: &[Transition]) -> Result<Batch> {
    let obs: Vec<Vec<f64>> = transitions
        .iter()
        .map(|t| norm.obs(&t.state, &t.goal))
        .collect();
    let next: Vec<Vec<f64>> = transitions
        .iter()
        .map(|t| norm.obs(&t.next_state, &t.goal))
        .collect();
    let actions: Vec<&[f64]> = transitions.iter().map(|t| t.action.as_slice()).collect();
    Ok(Batch {
        obs: Mat::from_rows(&obs)?,
        actions: Mat::from_rows(&actions)?,
        rewards: transitions.iter().map(|t| t.reward).collect(),
        next_obs: Mat::from_rows(&next)?,
    })
}

/// Run `n` episodes with `policy` and average the outcome. `q` scores every
/// visited `(observation, action)` pair. Success is judged on the final step.
pub fn evaluate_policy<P, Q>(
    env_config: &EnvConfig,
    n: usize,
    rng: &mut Rng,
    mut policy: P,
    mut q: Q,
) -> Result<(f64, f64, f64)>
where
    P: FnMut(&GoalObservation) -> Result<Vec<f64>>,
    Q: FnMut(&GoalObservation, &[f64]) -> Result<f64>,
{
    if n == 0 {
        return Err(CoreError::Contract(
            "evaluation needs at least one episode".into(),
        ));
    }
    let mut env = Env::new(env_config.clone())?;
    let (mut successes, mut reward_sum, mut q_sum, mut q_count) = (0usize, 0.0, 0.0, 0usize);
    for _ in 0..n {
        let mut obs = env.reset(rng);
        let final_success = loop {
            let a = policy(&obs)?;
            q_sum += q(&obs, &a)?;
            q_count += 1;
            let r = env.step(&a)?;
            reward_sum += r.reward;
            if r.done {
                break r.success;
            }
            obs = r.obs;
        };
        successes += usize::from(final_success);
    }
    Ok((
        successes as f64 / n as f64,
        reward_sum / n as f64,
        q_sum / q_count as f64,
    ))
}

/// Noise-free evaluation of the averaged policy.
pub fn evaluate(
    ens: &Ensemble,
    norm: &Normalizer,
    env_config: &EnvConfig,
    n: usize,
    rng: &mut Rng,
) -> Result<EpochMetrics> {
    let (success_rate, mean_reward, mean_q) = evaluate_policy(
        env_config,
        n,
        rng,
        |obs| ens.actor_avg(&norm.obs(&obs.state, &obs.desired_goal), false),
        |obs, a| ens.critic_avg(&norm.obs(&obs.state, &obs.desired_goal), a, false),
    )?;
    Ok(EpochMetrics {
        epoch: 0,
        success_rate,
        mean_reward,
        mean_q,
    })
}

/// Full training state of one run.
pub struct Trainer {
    pub config: TrainConfig,
    pub ensemble: Ensemble,
    pub normalizer: Normalizer,
    pub buffer: ReplayBuffer,
    pub counters: Counters,
    env: Env,
    env_rng: Rng,
    noise_rng: Rng,
    sample_rng: Rng,
    her_rng: Rng,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env = Env::new(config.env.clone())?;
        let spec = env.spec().clone();
        let shape = NetShape {
            obs_dim: spec.state_dim + spec.goal_dim,
            action_dim: spec.action_dim,
            hidden: config.hidden.clone(),
            max_action: spec.max_action,
        };
        let mut init_rng = Rng::stream(config.seed, Stream::Init);
        let ensemble = Ensemble::new(config.adcp, shape, &mut init_rng)?;
        let normalizer = Normalizer::new(spec.state_dim, spec.goal_dim, config.clip_range);
        let buffer = ReplayBuffer::new(
            TransitionDims {
                state: spec.state_dim,
                goal: spec.goal_dim,
                action: spec.action_dim,
            },
            config.buffer_capacity,
        )?;
        let seed = config.seed;
        Ok(Self {
            config,
            ensemble,
            normalizer,
            buffer,
            counters: Counters::default(),
            env,
            env_rng: Rng::stream(seed, Stream::Env),
            noise_rng: Rng::stream(seed, Stream::Noise),
            sample_rng: Rng::stream(seed, Stream::Sample),
            her_rng: Rng::stream(seed, Stream::Her),
        })
    }

    /// Roll out one episode with exploration noise.
    pub fn rollout(&mut self) -> Result<Episode> {
        let mut obs = self.env.reset(&mut self.env_rng);
        let mut ep = Episode::default();
        loop {
            let a = explore_action(
                &self.ensemble,
                &self.normalizer,
                &obs,
                self.config.noise_var,
                &mut self.noise_rng,
            )?;
            let r = self.env.step(&a)?;
            self.counters.env_steps += 1;
            ep.transitions.push(Transition {
                state: obs.state,
                goal: obs.desired_goal,
                action: a,
                reward: r.reward,
                next_state: r.obs.state.clone(),
                achieved_next: r.obs.achieved_goal.clone(),
                success: r.success,
            });
            obs = r.obs;
            if r.done {
                return Ok(ep);
            }
        }
    }

    /// Relabel, store and fold an episode into the normalizer statistics.
    pub fn ingest(&mut self, ep: &Episode) -> Result<()> {
        let reward_fn = self.env.reward_fn();
        let expanded = her_expand(
            ep,
            self.config.her_k,
            |a, g| reward_fn.eval(a, g),
            &mut self.her_rng,
        )?;
        self.buffer.store(&expanded)?;
        self.counters.transitions_stored += expanded.len() as u64;
        for tr in &ep.transitions {
            self.normalizer.state.update(&tr.state)?;
            self.normalizer.goal.update(&tr.goal)?;
            self.normalizer.goal.update(&tr.achieved_next)?;
        }
        if let Some(last) = ep.transitions.last() {
            self.normalizer.state.update(&last.next_state)?;
        }
        Ok(())
    }

    /// One optimization step: critics, then actors, then targets.
    pub fn optimize_step(&mut self) -> Result<Option<CycleStats>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let cfg = &self.config;
        let sample = self.buffer.sample(cfg.batch_size, &mut self.sample_rng)?;
        let batch = make_batch(&self.normalizer, &sample)?;
        let critic_loss =
            self.ensemble
                .critic_update(&batch, cfg.gamma, cfg.critic_lr, cfg.l2_coeff)?;
        let actor_objective = self
            .ensemble
            .actor_update(&batch, cfg.actor_lr, cfg.action_l2)?;
        self.ensemble.soft_update(cfg.tau);
        self.counters.opt_steps += 1;
        Ok(Some(CycleStats {
            critic_loss,
            actor_objective,
        }))
    }

    /// Rollouts for `rollout_steps` steps, then `opt_steps_per_cycle` updates.
    pub fn run_cycle(&mut self) -> Result<Option<CycleStats>> {
        let episodes = self.config.rollout_steps / self.config.env.horizon;
        for _ in 0..episodes {
            let ep = self.rollout()?;
            self.ingest(&ep)?;
        }
        let mut last = None;
        for _ in 0..self.config.opt_steps_per_cycle {
            if let Some(s) = self.optimize_step()? {
                last = Some(s);
            }
        }
        self.counters.cycles += 1;
        Ok(last)
    }

    /// Evaluate the current policy on a fixed set of evaluation episodes.
    pub fn evaluate(&self) -> Result<EpochMetrics> {
        let mut rng = Rng::stream(self.config.seed, Stream::Eval);
        evaluate(
            &self.ensemble,
            &self.normalizer,
            &self.config.env,
            self.config.eval_episodes,
            &mut rng,
        )
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            ensemble: self.ensemble.clone(),
            normalizer: self.normalizer.clone(),
            env: self.config.env.clone(),
        }
    }
}

/// Train for `config.epochs` epochs, calling `on_epoch` after each
/// evaluation (for progress output or per-epoch checkpoints).
pub fn train_with<F>(
    config: TrainConfig,
    mut on_epoch: F,
) -> std::result::Result<TrainOutcome, TrainError>
where
    F: FnMut(&EpochMetrics, &Trainer),
{
    let wrap = |epoch, cycle, last_stable_epoch, source| TrainError {
        epoch,
        cycle,
        last_stable_epoch,
        source,
    };
    let mut trainer = Trainer::new(config).map_err(|e| wrap(0, 0, None, e))?;
    let mut metrics = Vec::with_capacity(trainer.config.epochs);
    let mut stable = None;
    for epoch in 1..=trainer.config.epochs {
        for cycle in 1..=trainer.config.cycles_per_epoch {
            trainer
                .run_cycle()
                .map_err(|e| wrap(epoch, cycle, stable, e))?;
        }
        let mut m = trainer
            .evaluate()
            .map_err(|e| wrap(epoch, trainer.config.cycles_per_epoch, stable, e))?;
        m.epoch = epoch;
        if ![m.success_rate, m.mean_reward, m.mean_q]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(wrap(
                epoch,
                trainer.config.cycles_per_epoch,
                stable,
                CoreError::Diverged {
                    what: "evaluation metrics",
                    layer: 0,
                },
            ));
        }
        on_epoch(&m, &trainer);
        metrics.push(m);
        stable = Some(epoch);
    }
    Ok(TrainOutcome {
        metrics,
        checkpoint: trainer.checkpoint(),
        counters: trainer.counters,
    })
}

pub fn train(config: TrainConfig) -> std::result::Result<TrainOutcome, TrainError> {
    train_with(config, |_, _| {})
}
