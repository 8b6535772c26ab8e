//! Actor and critic ensembles with averaged outputs.
//!
//! An `A{D}C{P}` ensemble holds `D` actors and `P` critics, each paired with
//! a target copy and its own Adam state. The policy is the element-wise mean
//! of the actors and the value estimate is the mean of the critics; every
//! member receives `1/D` (resp. `1/P`) of the gradient flowing into that mean.

use std::fmt;
use std::str::FromStr;

use crate::adam::{adam_step, AdamState};
use crate::error::{check_len, Error, Result};
use crate::linalg::Mat;
use crate::mlp::{ForwardCache, MlpParams, OutputActivation};
use crate::par;
use crate::rng::Rng;

/// Final-layer init range for actors; keeps initial actions near zero.
pub const ACTOR_FINAL_INIT: f64 = 3e-3;

/// Ensemble size, written `A{d}C{p}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AdcpSpec {
    pub d: usize,
    pub p: usize,
}

impl AdcpSpec {
    pub fn new(d: usize, p: usize) -> Result<Self> {
        if d == 0 || p == 0 {
            return Err(Error::Contract(format!(
                "ensemble needs at least one actor and one critic, got A{d}C{p}"
            )));
        }
        Ok(Self { d, p })
    }
}

impl fmt::Display for AdcpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}C{}", self.d, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid ensemble spec {0:?}: expected A<actors>C<critics>, e.g. A2C3")]
pub struct ParseAdcpError(pub String);

impl FromStr for AdcpSpec {
    type Err = ParseAdcpError;

    /// Case-insensitive `A{d}C{p}` with positive decimal counts.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let err = || ParseAdcpError(s.to_string());
        let upper = s.trim().to_ascii_uppercase();
        let rest = upper.strip_prefix('A').ok_or_else(err)?;
        let (d, p) = rest.split_once('C').ok_or_else(err)?;
        let count = |t: &str| -> std::result::Result<usize, ParseAdcpError> {
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            match t.parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(err()),
            }
        };
        Ok(AdcpSpec {
            d: count(d)?,
            p: count(p)?,
        })
    }
}

pub fn parse_adcp(text: &str) -> std::result::Result<AdcpSpec, ParseAdcpError> {
    text.parse()
}

/// A main network, its target copy and the optimizer state of the main.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub main: MlpParams,
    pub target: MlpParams,
    pub opt: AdamState,
}

impl Member {
    fn new(main: MlpParams) -> Self {
        Self {
            target: main.clone(),
            opt: AdamState::new(&main),
            main,
        }
    }

    fn net(&self, use_target: bool) -> &MlpParams {
        if use_target {
            &self.target
        } else {
            &self.main
        }
    }
}

/// Network widths shared by every member.
#[derive(Debug, Clone, PartialEq)]
pub struct NetShape {
    /// Width of the (normalized) `state ‖ goal` input.
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub max_action: f64,
}

impl NetShape {
    pub fn actor_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_dim];
        s.extend(&self.hidden);
        s.push(self.action_dim);
        s
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_dim + self.action_dim];
        s.extend(&self.hidden);
        s.push(1);
        s
    }
}

/// A minibatch in network coordinates: observations are already normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Mat,
    pub actions: Mat,
    pub rewards: Vec<f64>,
    pub next_obs: Mat,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// `D` actors and `P` critics with target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub adcp: AdcpSpec,
    pub shape: NetShape,
    pub actors: Vec<Member>,
    pub critics: Vec<Member>,
}

impl Ensemble {
    /// Members are drawn independently from `rng`: all actors first, then
    /// all critics. Targets start as exact copies.
    pub fn new(adcp: AdcpSpec, shape: NetShape, rng: &mut Rng) -> Result<Self> {
        AdcpSpec::new(adcp.d, adcp.p)?;
        if !(shape.max_action > 0.0) {
            return Err(Error::Contract("max_action must be positive".into()));
        }
        let actor_out = OutputActivation::Tanh {
            scale: shape.max_action,
        };
        let actors = (0..adcp.d)
            .map(|_| {
                MlpParams::init(&shape.actor_sizes(), actor_out, Some(ACTOR_FINAL_INIT), rng)
                    .map(Member::new)
            })
            .collect::<Result<Vec<_>>>()?;
        let critics = (0..adcp.p)
            .map(|_| {
                MlpParams::init(&shape.critic_sizes(), OutputActivation::Linear, None, rng)
                    .map(Member::new)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            adcp,
            shape,
            actors,
            critics,
        })
    }

    /// Rebuild from stored members (checkpoint loading).
    pub fn from_members(
        shape: NetShape,
        actors: Vec<Member>,
        critics: Vec<Member>,
    ) -> Result<Self> {
        let adcp = AdcpSpec::new(actors.len(), critics.len())?;
        let check = |members: &[Member], sizes: Vec<usize>| -> Result<()> {
            for m in members {
                for net in [&m.main, &m.target, &m.opt.m, &m.opt.v] {
                    if net.layer_sizes() != sizes {
                        return Err(Error::Contract(format!(
                            "member layer sizes {:?} disagree with ensemble {:?}",
                            net.layer_sizes(),
                            sizes
                        )));
                    }
                }
            }
            Ok(())
        };
        check(&actors, shape.actor_sizes())?;
        check(&critics, shape.critic_sizes())?;
        Ok(Self {
            adcp,
            shape,
            actors,
            critics,
        })
    }

    pub fn max_action(&self) -> f64 {
        self.shape.max_action
    }

    /// Mean actor output for a batch of observations.
    pub fn actor_avg_batch(&self, obs: &Mat, use_targets: bool) -> Result<Mat> {
        let outs = par::map(&self.actors, |m| {
            m.net(use_targets).forward(obs).map(|r| r.0)
        });
        mean_of(outs)
    }

    /// Mean critic value for a batch of `(observation, action)` rows.
    pub fn critic_avg_batch(
        &self,
        obs: &Mat,
        actions: &Mat,
        use_targets: bool,
    ) -> Result<Vec<f64>> {
        let input = obs.hcat(actions)?;
        let outs = par::map(&self.critics, |m| {
            m.net(use_targets).forward(&input).map(|r| r.0)
        });
        Ok(mean_of(outs)?.into_data())
    }

    /// Mean of the `D` actor outputs for one `state ‖ goal` vector.
    pub fn actor_avg(&self, sg: &[f64], use_targets: bool) -> Result<Vec<f64>> {
        check_len("actor input", self.shape.obs_dim, sg.len())?;
        let obs = Mat::from_vec(1, sg.len(), sg.to_vec())?;
        Ok(self.actor_avg_batch(&obs, use_targets)?.into_data())
    }

    /// Mean of the `P` critic values for one `(state ‖ goal, action)` pair.
    pub fn critic_avg(&self, sg: &[f64], a: &[f64], use_targets: bool) -> Result<f64> {
        check_len("critic observation", self.shape.obs_dim, sg.len())?;
        check_len("critic action", self.shape.action_dim, a.len())?;
        let obs = Mat::from_vec(1, sg.len(), sg.to_vec())?;
        let act = Mat::from_vec(1, a.len(), a.to_vec())?;
        Ok(self.critic_avg_batch(&obs, &act, use_targets)?[0])
    }

    /// TD targets `r + γ Q̄_tar(s', μ̄_tar(s'))`, clipped to `[-1/(1-γ), 0]`.
    pub fn critic_target(&self, batch: &Batch, gamma: f64) -> Result<Vec<f64>> {
        let next_actions = self.actor_avg_batch(&batch.next_obs, true)?;
        let q_next = self.critic_avg_batch(&batch.next_obs, &next_actions, true)?;
        let lo = -1.0 / (1.0 - gamma);
        Ok(batch
            .rewards
            .iter()
            .zip(&q_next)
            .map(|(r, q)| (r + gamma * q).clamp(lo, 0.0))
            .collect())
    }

    /// `l2_coeff · Σ w²` over every critic weight matrix (main networks only).
    pub fn critic_l2(&self, l2_coeff: f64) -> f64 {
        if l2_coeff == 0.0 {
            return 0.0;
        }
        let sum: f64 = self
            .critics
            .iter()
            .flat_map(|m| &m.main.layers)
            .map(|l| l.weight.data().iter().map(|w| w * w).sum::<f64>())
            .sum();
        l2_coeff * sum
    }

    /// One step on `mean_b (y_b − Q̄(s_b, a_b))² + l2` for every critic.
    /// Returns the loss before the update.
    pub fn critic_update(
        &mut self,
        batch: &Batch,
        gamma: f64,
        lr: f64,
        l2_coeff: f64,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("critic update on an empty batch".into()));
        }
        let y = self.critic_target(batch, gamma)?;
        let input = batch.obs.hcat(&batch.actions)?;
        let fwd = par::map(&self.critics, |m| m.main.forward(&input));
        let fwd = fwd.into_iter().collect::<Result<Vec<_>>>()?;
        let q_avg = mean_of(fwd.iter().map(|(q, _)| Ok(q.clone())).collect())?;

        let b = batch.len() as f64;
        let p = self.adcp.p as f64;
        let mut td = 0.0;
        let mut upstream = Mat::zeros(batch.len(), 1);
        for (i, (q, target)) in q_avg.data().iter().zip(&y).enumerate() {
            let diff = q - target;
            td += diff * diff;
            upstream.set(i, 0, 2.0 * diff / b / p);
        }
        let loss = td / b + self.critic_l2(l2_coeff);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                what: "critic loss",
                layer: 0,
            });
        }

        let caches: Vec<ForwardCache> = fwd.into_iter().map(|(_, c)| c).collect();
        let results = par::map_mut(&mut self.critics, |i, m| {
            let (mut g, _) = m.main.backward(&caches[i], &upstream)?;
            if l2_coeff != 0.0 {
                for (gl, pl) in g.layers.iter_mut().zip(&m.main.layers) {
                    for (gw, w) in gl.weight.data_mut().iter_mut().zip(pl.weight.data()) {
                        *gw += 2.0 * l2_coeff * w;
                    }
                }
            }
            adam_step(&mut m.main, &mut m.opt, &g, lr)
        });
        results.into_iter().collect::<Result<()>>()?;
        Ok(loss)
    }

    /// One step on `−mean_b Q̄(s_b, μ̄(s_b)) + β·mean_{b,j} (μ̄_j(s_b)/max_action)²`
    /// for every actor; critics are read but not modified. Returns the
    /// objective before the update.
    pub fn actor_update(&mut self, batch: &Batch, lr: f64, action_l2: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("actor update on an empty batch".into()));
        }
        let obs = &batch.obs;
        let fwd = par::map(&self.actors, |m| m.main.forward(obs));
        let fwd = fwd.into_iter().collect::<Result<Vec<_>>>()?;
        let mu = mean_of(fwd.iter().map(|(a, _)| Ok(a.clone())).collect())?;

        let input = obs.hcat(&mu)?;
        let cfwd = par::map(&self.critics, |m| m.main.forward(&input));
        let cfwd = cfwd.into_iter().collect::<Result<Vec<_>>>()?;
        let q_avg = mean_of(cfwd.iter().map(|(q, _)| Ok(q.clone())).collect())?;

        let b = batch.len() as f64;
        let p = self.adcp.p as f64;
        let d = self.adcp.d as f64;
        let max_a = self.shape.max_action;
        let mut q_sum = 0.0;
        for q in q_avg.data() {
            q_sum += q;
        }
        let mut penalty = 0.0;
        for a in mu.data() {
            let u = a / max_a;
            penalty += u * u;
        }
        let k = self.shape.action_dim as f64;
        let objective = -q_sum / b + action_l2 * penalty / (b * k);
        if !objective.is_finite() {
            return Err(Error::Diverged {
                what: "actor objective",
                layer: 0,
            });
        }

        // ∂objective/∂Q̄_b = −1/B, split evenly across critics.
        let q_up = Mat::from_vec(batch.len(), 1, vec![-1.0 / b / p; batch.len()])?;
        let critics = &self.critics;
        let dinputs = par::map_range(critics.len(), |i| {
            critics[i].main.backward_input(&cfwd[i].1, &q_up)
        });
        let obs_dim = self.shape.obs_dim;
        let mut da: Option<Mat> = None;
        for dx in dinputs {
            let part = dx?.columns(obs_dim, self.shape.action_dim);
            da = Some(match da {
                None => part,
                Some(mut acc) => {
                    acc.data_mut()
                        .iter_mut()
                        .zip(part.data())
                        .for_each(|(x, y)| *x += y);
                    acc
                }
            });
        }
        let mut upstream = da.expect("at least one critic");
        for (g, a) in upstream.data_mut().iter_mut().zip(mu.data()) {
            *g += action_l2 * 2.0 * (a / max_a) / max_a / (b * k);
            *g /= d;
        }

        let caches: Vec<ForwardCache> = fwd.into_iter().map(|(_, c)| c).collect();
        let results = par::map_mut(&mut self.actors, |i, m| {
            let (g, _) = m.main.backward(&caches[i], &upstream)?;
            adam_step(&mut m.main, &mut m.opt, &g, lr)
        });
        results.into_iter().collect::<Result<()>>()?;
        Ok(objective)
    }

    /// Polyak update `target ← τ·main + (1−τ)·target` for every member.
    pub fn soft_update(&mut self, tau: f64) {
        let keep = 1.0 - tau;
        par::map_mut(&mut self.actors, |_, m| soft_update_member(m, tau, keep));
        par::map_mut(&mut self.critics, |_, m| soft_update_member(m, tau, keep));
    }
}

fn soft_update_member(m: &mut Member, tau: f64, keep: f64) {
    m.target
        .zip_inplace(&m.main, |t, x| *t = tau * x + keep * *t);
}

/// Element-wise mean of equally shaped matrices, summed in member order.
fn mean_of(mats: Vec<Result<Mat>>) -> Result<Mat> {
    let n = mats.len() as f64;
    let mut it = mats.into_iter();
    let mut acc = it
        .next()
        .ok_or_else(|| Error::Contract("mean over zero members".into()))??;
    for m in it {
        let m = m?;
        acc.data_mut()
            .iter_mut()
            .zip(m.data())
            .for_each(|(x, y)| *x += y);
    }
    acc.data_mut().iter_mut().for_each(|x| *x /= n);
    Ok(acc)
}
