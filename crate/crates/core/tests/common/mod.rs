//! Straight-line reference code shared by the oracle tests. Nothing here
//! calls the library's matrix or MLP code paths.
#![allow(dead_code)]

pub mod ensemble;
pub mod gradcheck;
pub mod reference;

use aacher_core::mlp::{MlpParams, OutputActivation, LAYER_NORM_EPS};
use aacher_core::rng::Rng;

pub fn reference_forward(p: &MlpParams, x: &[f64]) -> Vec<f64> {
    let n = p.layers.len();
    let mut h = x.to_vec();
    for (li, layer) in p.layers.iter().enumerate() {
        let (fan_in, fan_out) = (layer.weight.rows(), layer.weight.cols());
        let mut z = vec![0.0; fan_out];
        for j in 0..fan_out {
            let mut acc = layer.bias[j];
            for i in 0..fan_in {
                acc += h[i] * layer.weight.get(i, j);
            }
            z[j] = acc;
        }
        if li + 1 < n {
            let norm = layer.norm.as_ref().unwrap();
            let mean: f64 = z.iter().sum::<f64>() / fan_out as f64;
            let var: f64 = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / fan_out as f64;
            let sd = var.max(LAYER_NORM_EPS).sqrt();
            h = (0..fan_out)
                .map(|j| (norm.gain[j] * (z[j] - mean) / sd + norm.bias[j]).max(0.0))
                .collect();
        } else {
            h = match p.output {
                OutputActivation::Linear => z,
                OutputActivation::Tanh { scale } => z.iter().map(|v| scale * v.tanh()).collect(),
            };
        }
    }
    h
}

/// Randomize every parameter of `p` uniformly in `±scale`.
pub fn randomize(p: &mut MlpParams, scale: f64, rng: &mut Rng) {
    let flat: Vec<f64> = (0..p.num_params())
        .map(|_| rng.uniform(-scale, scale))
        .collect();
    p.assign_flat(&flat).unwrap();
}

pub fn random_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(-scale, scale)).collect()
}
