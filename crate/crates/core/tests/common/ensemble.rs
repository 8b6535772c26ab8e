//! Straight-line ensemble oracles: brute-force member averages and the
//! critic and actor objectives written out per sample.

use aacher_core::linalg::Mat;
use aacher_core::networks::{AdcpSpec, Batch, Ensemble, NetShape};
use aacher_core::rng::Rng;

use super::{random_vec, randomize, reference_forward};

pub fn shape(obs: usize, act: usize, max_action: f64) -> NetShape {
    NetShape {
        obs_dim: obs,
        action_dim: act,
        hidden: vec![8, 8],
        max_action,
    }
}

/// Ensemble whose mains and targets are all independently randomized.
pub fn random_ensemble(d: usize, p: usize, seed: u64) -> Ensemble {
    let mut rng = Rng::new(seed);
    let mut ens = Ensemble::new(AdcpSpec::new(d, p).unwrap(), shape(3, 2, 1.5), &mut rng).unwrap();
    for m in ens.actors.iter_mut().chain(ens.critics.iter_mut()) {
        randomize(&mut m.main, 0.5, &mut rng);
        randomize(&mut m.target, 0.5, &mut rng);
    }
    ens
}

pub fn random_batch(n: usize, rng: &mut Rng) -> Batch {
    let rows = |w: usize, rng: &mut Rng| {
        let r: Vec<Vec<f64>> = (0..n).map(|_| random_vec(w, 2.0, rng)).collect();
        Mat::from_rows(&r).unwrap()
    };
    Batch {
        obs: rows(3, rng),
        actions: rows(2, rng),
        rewards: (0..n)
            .map(|i| if i % 3 == 0 { 0.0 } else { -1.0 })
            .collect(),
        next_obs: rows(3, rng),
    }
}

pub fn ref_actor_avg(ens: &Ensemble, sg: &[f64], target: bool) -> Vec<f64> {
    let mut acc = vec![0.0; ens.shape.action_dim];
    for m in &ens.actors {
        let net = if target { &m.target } else { &m.main };
        for (a, v) in acc.iter_mut().zip(reference_forward(net, sg)) {
            *a += v;
        }
    }
    acc.iter().map(|a| a / ens.actors.len() as f64).collect()
}

pub fn ref_critic_avg(ens: &Ensemble, sg: &[f64], a: &[f64], target: bool) -> f64 {
    let input: Vec<f64> = sg.iter().chain(a).copied().collect();
    let sum: f64 = ens
        .critics
        .iter()
        .map(|m| reference_forward(if target { &m.target } else { &m.main }, &input)[0])
        .sum();
    sum / ens.critics.len() as f64
}

/// Straight-line critic loss: mean over the batch of the squared TD error of
/// the averaged critic, plus the weight penalty.
pub fn ref_critic_loss(ens: &Ensemble, b: &Batch, gamma: f64, l2: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..b.len() {
        let next = b.next_obs.row(i);
        let a_next = ref_actor_avg(ens, next, true);
        let q_next = ref_critic_avg(ens, next, &a_next, true);
        let y = (b.rewards[i] + gamma * q_next).clamp(-1.0 / (1.0 - gamma), 0.0);
        let q = ref_critic_avg(ens, b.obs.row(i), b.actions.row(i), false);
        total += (y - q).powi(2);
    }
    let mut w2 = 0.0;
    for m in &ens.critics {
        for l in &m.main.layers {
            for w in l.weight.data() {
                w2 += w * w;
            }
        }
    }
    total / b.len() as f64 + l2 * w2
}

pub fn ref_actor_objective(ens: &Ensemble, b: &Batch, beta: f64) -> f64 {
    let mut q = 0.0;
    let mut pen = 0.0;
    for i in 0..b.len() {
        let mu = ref_actor_avg(ens, b.obs.row(i), false);
        q += ref_critic_avg(ens, b.obs.row(i), &mu, false);
        pen += mu
            .iter()
            .map(|a| (a / ens.shape.max_action).powi(2))
            .sum::<f64>();
    }
    (-q + beta * pen / ens.shape.action_dim as f64) / b.len() as f64
}
