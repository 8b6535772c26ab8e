//! Central finite-difference gradient checks against the reference forward.

use aacher_core::mlp::{mlp_backward, mlp_forward, MlpParams, OutputActivation};
use aacher_core::rng::Rng;

use super::reference_forward;

/// Randomize every parameter, including norm gains and biases.
pub fn random_net(sizes: &[usize], output: OutputActivation, rng: &mut Rng) -> MlpParams {
    let mut p = MlpParams::init(sizes, output, None, rng).unwrap();
    p.map_inplace(|_| 0.0);
    let flat: Vec<f64> = (0..p.num_params())
        .map(|_| rng.uniform(-1.0, 1.0))
        .collect();
    p.assign_flat(&flat).unwrap();
    p
}

pub fn scalar_objective(p: &MlpParams, x: &[f64], up: &[f64]) -> f64 {
    reference_forward(p, x)
        .iter()
        .zip(up)
        .map(|(a, b)| a * b)
        .sum()
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Max relative error between analytic and central-difference gradients.
pub fn grad_check(p: &MlpParams, x: &[f64], up: &[f64]) -> f64 {
    let h = 1e-5;
    let (_, cache) = mlp_forward(p, x).unwrap();
    let (g, dx) = mlp_backward(p, &cache, up).unwrap();
    let mut worst: f64 = 0.0;

    let flat = p.flatten();
    let gflat = g.flatten();
    let mut q = p.clone();
    for i in 0..flat.len() {
        let mut f = flat.clone();
        f[i] = flat[i] + h;
        q.assign_flat(&f).unwrap();
        let plus = scalar_objective(&q, x, up);
        f[i] = flat[i] - h;
        q.assign_flat(&f).unwrap();
        let minus = scalar_objective(&q, x, up);
        worst = worst.max(rel_err(gflat[i], (plus - minus) / (2.0 * h)));
    }
    for i in 0..x.len() {
        let mut xp = x.to_vec();
        xp[i] += h;
        let mut xm = x.to_vec();
        xm[i] -= h;
        let num = (scalar_objective(p, &xp, up) - scalar_objective(p, &xm, up)) / (2.0 * h);
        worst = worst.max(rel_err(dx[i], num));
    }
    worst
}
