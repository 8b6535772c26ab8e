//! A plain single-actor, single-critic DDPG with hindsight relabeling,
//! written against the raw network and optimizer primitives. An A1C1
//! ensemble run must match it bit for bit.

use aacher_core::adam::{adam_step, AdamState};
use aacher_core::envs::Env;
use aacher_core::linalg::Mat;
use aacher_core::mlp::{MlpParams, OutputActivation};
use aacher_core::networks::ACTOR_FINAL_INIT;
use aacher_core::normalizer::Normalizer;
use aacher_core::replay::{her_expand, Episode, ReplayBuffer, Transition, TransitionDims};
use aacher_core::rng::{Rng, Stream};
use aacher_core::trainer::{evaluate_policy, EpochMetrics, TrainConfig};

pub struct Net {
    pub main: MlpParams,
    pub target: MlpParams,
    pub opt: AdamState,
}

impl Net {
    fn new(main: MlpParams) -> Self {
        Net {
            target: main.clone(),
            opt: AdamState::new(&main),
            main,
        }
    }

    fn soft_update(&mut self, tau: f64) {
        let keep = 1.0 - tau;
        self.target
            .zip_inplace(&self.main, |t, x| *t = tau * x + keep * *t);
    }
}

pub struct Reference {
    cfg: TrainConfig,
    env: Env,
    pub actor: Net,
    pub critic: Net,
    pub norm: Normalizer,
    buffer: ReplayBuffer,
    env_rng: Rng,
    noise_rng: Rng,
    sample_rng: Rng,
    her_rng: Rng,
}

impl Reference {
    pub fn new(cfg: TrainConfig) -> Self {
        let env = Env::new(cfg.env.clone()).unwrap();
        let spec = env.spec().clone();
        let obs_dim = spec.state_dim + spec.goal_dim;
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(spec.action_dim);
        let mut critic_sizes = vec![obs_dim + spec.action_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);

        let mut init = Rng::stream(cfg.seed, Stream::Init);
        let tanh = OutputActivation::Tanh {
            scale: spec.max_action,
        };
        let actor = MlpParams::init(&actor_sizes, tanh, Some(ACTOR_FINAL_INIT), &mut init).unwrap();
        let critic =
            MlpParams::init(&critic_sizes, OutputActivation::Linear, None, &mut init).unwrap();
        let dims = TransitionDims {
            state: spec.state_dim,
            goal: spec.goal_dim,
            action: spec.action_dim,
        };
        let s = cfg.seed;
        Reference {
            norm: Normalizer::new(spec.state_dim, spec.goal_dim, cfg.clip_range),
            buffer: ReplayBuffer::new(dims, cfg.buffer_capacity).unwrap(),
            actor: Net::new(actor),
            critic: Net::new(critic),
            env,
            env_rng: Rng::stream(s, Stream::Env),
            noise_rng: Rng::stream(s, Stream::Noise),
            sample_rng: Rng::stream(s, Stream::Sample),
            her_rng: Rng::stream(s, Stream::Her),
            cfg,
        }
    }

    fn act(&self, state: &[f64], goal: &[f64]) -> Vec<f64> {
        self.actor
            .main
            .forward_vec(&self.norm.obs(state, goal))
            .unwrap()
            .0
    }

    fn rollout(&mut self) -> Episode {
        let m = self.env.spec().max_action;
        let std = self.cfg.noise_var.sqrt();
        let mut obs = self.env.reset(&mut self.env_rng);
        let mut ep = Episode::default();
        loop {
            let mut a = self.act(&obs.state, &obs.desired_goal);
            for v in &mut a {
                *v = (*v + self.noise_rng.gaussian(0.0, std)).clamp(-m, m);
            }
            let r = self.env.step(&a).unwrap();
            ep.transitions.push(Transition {
                state: obs.state.clone(),
                goal: obs.desired_goal.clone(),
                action: a,
                reward: r.reward,
                next_state: r.obs.state.clone(),
                achieved_next: r.obs.achieved_goal.clone(),
                success: r.success,
            });
            obs = r.obs;
            if r.done {
                return ep;
            }
        }
    }

    fn store(&mut self, ep: &Episode) {
        let f = self.env.reward_fn();
        let all = her_expand(ep, self.cfg.her_k, |a, g| f.eval(a, g), &mut self.her_rng).unwrap();
        self.buffer.store(&all).unwrap();
        for t in &ep.transitions {
            self.norm.state.update(&t.state).unwrap();
            self.norm.goal.update(&t.goal).unwrap();
            self.norm.goal.update(&t.achieved_next).unwrap();
        }
        let last = ep.transitions.last().unwrap();
        self.norm.state.update(&last.next_state).unwrap();
    }

    fn optimize(&mut self) {
        let cfg = &self.cfg;
        let sample = self
            .buffer
            .sample(cfg.batch_size, &mut self.sample_rng)
            .unwrap();
        let rows = |f: &dyn Fn(&Transition) -> Vec<f64>| {
            Mat::from_rows(&sample.iter().map(f).collect::<Vec<_>>()).unwrap()
        };
        let norm = &self.norm;
        let obs = rows(&|t| norm.obs(&t.state, &t.goal));
        let next = rows(&|t| norm.obs(&t.next_state, &t.goal));
        let actions = rows(&|t| t.action.clone());
        let b = sample.len() as f64;
        let k = actions.cols() as f64;
        let max_a = self.env.spec().max_action;

        // Critic.
        let next_a = self.actor.target.forward(&next).unwrap().0;
        let q_next = self
            .critic
            .target
            .forward(&next.hcat(&next_a).unwrap())
            .unwrap()
            .0;
        let lo = -1.0 / (1.0 - cfg.gamma);
        let (q, cache) = self
            .critic
            .main
            .forward(&obs.hcat(&actions).unwrap())
            .unwrap();
        let mut up = Mat::zeros(sample.len(), 1);
        for i in 0..sample.len() {
            let y = (sample[i].reward + cfg.gamma * q_next.get(i, 0)).clamp(lo, 0.0);
            up.set(i, 0, 2.0 * (q.get(i, 0) - y) / b);
        }
        let (mut g, _) = self.critic.main.backward(&cache, &up).unwrap();
        if cfg.l2_coeff != 0.0 {
            for (gl, pl) in g.layers.iter_mut().zip(&self.critic.main.layers) {
                for (gw, w) in gl.weight.data_mut().iter_mut().zip(pl.weight.data()) {
                    *gw += 2.0 * cfg.l2_coeff * w;
                }
            }
        }
        adam_step(
            &mut self.critic.main,
            &mut self.critic.opt,
            &g,
            cfg.critic_lr,
        )
        .unwrap();

        // Actor, through the freshly updated critic.
        let (mu, acache) = self.actor.main.forward(&obs).unwrap();
        let (_, ccache) = self.critic.main.forward(&obs.hcat(&mu).unwrap()).unwrap();
        let q_up = Mat::from_vec(sample.len(), 1, vec![-1.0 / b; sample.len()]).unwrap();
        let dx = self.critic.main.backward_input(&ccache, &q_up).unwrap();
        let mut da = dx.columns(obs.cols(), actions.cols());
        for (g, a) in da.data_mut().iter_mut().zip(mu.data()) {
            *g += cfg.action_l2 * 2.0 * (a / max_a) / max_a / (b * k);
        }
        let (ga, _) = self.actor.main.backward(&acache, &da).unwrap();
        adam_step(&mut self.actor.main, &mut self.actor.opt, &ga, cfg.actor_lr).unwrap();

        self.actor.soft_update(cfg.tau);
        self.critic.soft_update(cfg.tau);
    }

    fn evaluate(&self, epoch: usize) -> EpochMetrics {
        let mut rng = Rng::stream(self.cfg.seed, Stream::Eval);
        let (success_rate, mean_reward, mean_q) = evaluate_policy(
            &self.cfg.env,
            self.cfg.eval_episodes,
            &mut rng,
            |o| Ok(self.act(&o.state, &o.desired_goal)),
            |o, a| {
                let x: Vec<f64> = self
                    .norm
                    .obs(&o.state, &o.desired_goal)
                    .into_iter()
                    .chain(a.iter().copied())
                    .collect();
                Ok(self.critic.main.forward_vec(&x)?.0[0])
            },
        )
        .unwrap();
        EpochMetrics {
            epoch,
            success_rate,
            mean_reward,
            mean_q,
        }
    }

    pub fn run(mut self) -> (Vec<EpochMetrics>, Self) {
        let mut out = Vec::new();
        for epoch in 1..=self.cfg.epochs {
            for _ in 0..self.cfg.cycles_per_epoch {
                for _ in 0..self.cfg.rollout_steps / self.cfg.env.horizon {
                    let ep = self.rollout();
                    self.store(&ep);
                }
                for _ in 0..self.cfg.opt_steps_per_cycle {
                    self.optimize();
                }
            }
            out.push(self.evaluate(epoch));
        }
        (out, self)
    }
}
