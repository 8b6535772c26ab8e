//! Multilayer perceptron with per-layer normalization, batched over rows.
//!
//! Every hidden layer computes `affine -> layer norm -> gain/bias -> ReLU`;
//! the output layer is affine, optionally squashed by `scale * tanh`.

use crate::error::{check_len, Error, Result};
use crate::linalg::{matmul, matmul_at_acc, matmul_bt, Mat};
use crate::rng::Rng;

/// Floor applied to the per-row variance before taking the square root.
pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutputActivation {
    Linear,
    /// `scale * tanh(z)`, bounding every output to `[-scale, scale]`.
    Tanh {
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

/// One affine layer. `weight` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub norm: Option<LayerNorm>,
}

impl Layer {
    fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    /// Parameter slices in a fixed order: weight, bias, then norm gain/bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = vec![self.weight.data(), self.bias.as_slice()];
        if let Some(n) = &self.norm {
            out.push(&n.gain);
            out.push(&n.bias);
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.weight.data_mut(), self.bias.as_mut_slice()];
        if let Some(n) = &mut self.norm {
            out.push(&mut n.gain);
            out.push(&mut n.bias);
        }
        out
    }
}

/// Weights, biases and normalization parameters of one network. Gradients
/// and optimizer moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub output: OutputActivation,
}

/// Intermediate values kept by [`MlpParams::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to every layer; `inputs[0]` is the network input.
    inputs: Vec<Mat>,
    /// Normalized pre-activations of each hidden layer, before gain/bias.
    normalized: Vec<Mat>,
    /// Per-row normalization statistics of each hidden layer.
    stats: Vec<Vec<RowStat>>,
    output: Mat,
}

#[derive(Debug, Clone, Copy)]
struct RowStat {
    /// `1 / sqrt(max(var, eps))`
    inv_std: f64,
    /// The variance floor was active, so the std does not depend on the row.
    floored: bool,
}

impl ForwardCache {
    pub fn normalized(&self, hidden: usize) -> &Mat {
        &self.normalized[hidden]
    }

    pub fn output(&self) -> &Mat {
        &self.output
    }
}

impl MlpParams {
    /// Zero weights and biases, unit norm gains.
    pub fn new(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Contract(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| Layer {
                weight: Mat::zeros(sizes[i], sizes[i + 1]),
                bias: vec![0.0; sizes[i + 1]],
                norm: (i + 1 < n).then(|| LayerNorm {
                    gain: vec![1.0; sizes[i + 1]],
                    bias: vec![0.0; sizes[i + 1]],
                }),
            })
            .collect();
        Ok(Self { layers, output })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`; the last layer uses
    /// `±final_scale` when given. Biases start at zero.
    pub fn init(
        sizes: &[usize],
        output: OutputActivation,
        final_scale: Option<f64>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut p = Self::new(sizes, output)?;
        let last = p.layers.len() - 1;
        for (i, layer) in p.layers.iter_mut().enumerate() {
            let bound = match final_scale {
                Some(s) if i == last => s,
                _ => 1.0 / (layer.fan_in() as f64).sqrt(),
            };
            for w in layer.weight.data_mut() {
                *w = rng.uniform(-bound, bound);
            }
        }
        Ok(p)
    }

    /// Same shape, every entry zero (norm gains included).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.map_inplace(|_| 0.0);
        z
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in()];
        s.extend(self.layers.iter().map(Layer::fan_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.slices())
            .map(<[f64]>::len)
            .sum()
    }

    pub fn map_inplace(&mut self, mut f: impl FnMut(f64) -> f64) {
        for layer in &mut self.layers {
            for s in layer.slices_mut() {
                s.iter_mut().for_each(|x| *x = f(*x));
            }
        }
    }

    /// Apply `f(self_entry, other_entry)` element-wise; shapes must agree.
    pub fn zip_inplace(&mut self, other: &Self, mut f: impl FnMut(&mut f64, f64)) {
        debug_assert_eq!(self.layer_sizes(), other.layer_sizes());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (sa, sb) in a.slices_mut().into_iter().zip(b.slices()) {
                sa.iter_mut().zip(sb).for_each(|(x, &y)| f(x, y));
            }
        }
    }

    /// All parameters flattened in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.slices())
            .flat_map(|s| s.iter().copied())
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_len("MlpParams::assign_flat", self.num_params(), flat.len())?;
        let mut off = 0;
        for layer in &mut self.layers {
            for s in layer.slices_mut() {
                s.copy_from_slice(&flat[off..off + s.len()]);
                off += s.len();
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flat_map(|l| l.slices())
            .all(|s| s.iter().all(|x| x.is_finite()))
    }

    /// Forward pass over a batch (one row per sample).
    pub fn forward(&self, input: &Mat) -> Result<(Mat, ForwardCache)> {
        check_len("mlp input width", self.input_dim(), input.cols())?;
        let hidden = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut normalized = Vec::with_capacity(hidden);
        let mut stats = Vec::with_capacity(hidden);
        inputs.push(input.clone());

        for layer in &self.layers[..hidden] {
            let mut z = affine(inputs.last().unwrap(), layer);
            let norm = layer.norm.as_ref().ok_or_else(|| {
                Error::Contract("hidden layer without normalization parameters".into())
            })?;
            let mut istd = Vec::with_capacity(z.rows());
            let mut h = Mat::zeros(z.rows(), z.cols());
            for r in 0..z.rows() {
                let row = z.row_mut(r);
                let s = normalize_row(row);
                istd.push(s);
                for ((o, &x), (g, b)) in h
                    .row_mut(r)
                    .iter_mut()
                    .zip(row.iter())
                    .zip(norm.gain.iter().zip(&norm.bias))
                {
                    *o = (g * x + b).max(0.0);
                }
            }
            normalized.push(z);
            stats.push(istd);
            inputs.push(h);
        }

        let mut out = affine(inputs.last().unwrap(), &self.layers[hidden]);
        if let OutputActivation::Tanh { scale } = self.output {
            out.data_mut()
                .iter_mut()
                .for_each(|x| *x = scale * x.tanh());
        }
        let cache = ForwardCache {
            inputs,
            normalized,
            stats,
            output: out.clone(),
        };
        Ok((out, cache))
    }

    /// Single-sample forward pass.
    pub fn forward_vec(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let m = Mat::from_vec(1, input.len(), input.to_vec())?;
        let (out, cache) = self.forward(&m)?;
        Ok((out.into_data(), cache))
    }

    /// Reverse pass for the scalar `Σ output ⊙ upstream`, summed over the batch.
    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Mat) -> Result<(MlpParams, Mat)> {
        let mut grads = self.zeros_like();
        let dx = self.backward_impl(cache, upstream, Some(&mut grads))?;
        Ok((grads, dx))
    }

    /// Like [`backward`](Self::backward) but only the input gradient.
    pub fn backward_input(&self, cache: &ForwardCache, upstream: &Mat) -> Result<Mat> {
        self.backward_impl(cache, upstream, None)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        upstream: &Mat,
        mut grads: Option<&mut MlpParams>,
    ) -> Result<Mat> {
        let hidden = self.layers.len() - 1;
        if cache.inputs.len() != self.layers.len() || cache.normalized.len() != hidden {
            return Err(Error::Contract(
                "forward cache does not belong to this network".into(),
            ));
        }
        check_len("upstream rows", cache.output.rows(), upstream.rows())?;
        check_len("upstream cols", self.output_dim(), upstream.cols())?;

        let mut dz = upstream.clone();
        if let OutputActivation::Tanh { scale } = self.output {
            for (d, &y) in dz.data_mut().iter_mut().zip(cache.output.data()) {
                let t = y / scale;
                *d *= scale * (1.0 - t * t);
            }
        }

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let x = &cache.inputs[li];
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[li];
                matmul_at_acc(x, &dz, &mut gl.weight);
                for r in 0..dz.rows() {
                    for (b, d) in gl.bias.iter_mut().zip(dz.row(r)) {
                        *b += d;
                    }
                }
            }
            let mut dx = matmul_bt(&dz, &layer.weight);
            if li == 0 {
                return Ok(dx);
            }

            // dx is the gradient w.r.t. the previous hidden layer's ReLU output.
            let hi = li - 1;
            let prev = &self.layers[hi];
            let norm = prev.norm.as_ref().expect("hidden layer norm");
            let xhat = &cache.normalized[hi];
            let act = &cache.inputs[li];
            let width = dx.cols() as f64;
            for r in 0..dx.rows() {
                let row = dx.row_mut(r);
                let xh = xhat.row(r);
                let a = act.row(r);
                for (d, &h) in row.iter_mut().zip(a) {
                    if h <= 0.0 {
                        *d = 0.0;
                    }
                }
                if let Some(g) = grads.as_deref_mut() {
                    let gn = g.layers[hi].norm.as_mut().expect("hidden layer norm");
                    for j in 0..row.len() {
                        gn.gain[j] += row[j] * xh[j];
                        gn.bias[j] += row[j];
                    }
                }
                // d/dz through the normalization, with the gain folded in.
                let mut mean_d = 0.0;
                let mut mean_dx = 0.0;
                for j in 0..row.len() {
                    row[j] *= norm.gain[j];
                    mean_d += row[j];
                    mean_dx += row[j] * xh[j];
                }
                mean_d /= width;
                mean_dx /= width;
                let st = cache.stats[hi][r];
                for j in 0..row.len() {
                    let corr = if st.floored { 0.0 } else { xh[j] * mean_dx };
                    row[j] = st.inv_std * (row[j] - mean_d - corr);
                }
            }
            dz = dx;
        }
        unreachable!("loop returns at the input layer")
    }
}

fn affine(x: &Mat, layer: &Layer) -> Mat {
    let mut z = matmul(x, &layer.weight);
    for r in 0..z.rows() {
        for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
            *v += b;
        }
    }
    z
}

/// Normalize in place to zero mean, unit variance.
fn normalize_row(row: &mut [f64]) -> RowStat {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let floored = var < LAYER_NORM_EPS;
    let inv_std = 1.0 / var.max(LAYER_NORM_EPS).sqrt();
    row.iter_mut().for_each(|x| *x = (*x - mean) * inv_std);
    RowStat { inv_std, floored }
}

/// Free-function form of [`MlpParams::forward_vec`].
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    params.forward_vec(input)
}

/// Free-function form of [`MlpParams::backward`] for a single sample.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    upstream: &[f64],
) -> Result<(MlpParams, Vec<f64>)> {
    let up = Mat::from_vec(1, upstream.len(), upstream.to_vec())?;
    let (g, dx) = params.backward(cache, &up)?;
    Ok((g, dx.into_data()))
}
