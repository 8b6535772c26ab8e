//! Running mean/std observation normalization.

use crate::error::{check_len, Result};

/// Floor on the estimated standard deviation.
pub const NORM_EPS: f64 = 0.01;
pub const DEFAULT_CLIP: f64 = 5.0;

/// Per-dimension running count, sum and sum of squares.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub count: u64,
    pub sum: Vec<f64>,
    pub sumsq: Vec<f64>,
    pub clip_range: f64,
}

impl RunningNorm {
    pub fn new(dim: usize, clip_range: f64) -> Self {
        Self {
            count: 0,
            sum: vec![0.0; dim],
            sumsq: vec![0.0; dim],
            clip_range,
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        check_len("normalizer sample", self.dim(), x.len())?;
        for ((s, q), v) in self.sum.iter_mut().zip(self.sumsq.iter_mut()).zip(x) {
            *s += v;
            *q += v * v;
        }
        self.count += 1;
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![0.0; self.dim()];
        }
        let n = self.count as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.dim()];
        }
        let n = self.count as f64;
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(s, q)| {
                let m = s / n;
                (q / n - m * m).max(NORM_EPS * NORM_EPS).sqrt()
            })
            .collect()
    }

    /// `clip((x − mean) / std, ±clip_range)`; the identity before any update.
    pub fn normalize_into(&self, x: &[f64], out: &mut Vec<f64>) {
        if self.count == 0 {
            out.extend_from_slice(x);
            return;
        }
        let n = self.count as f64;
        let c = self.clip_range;
        for ((v, s), q) in x.iter().zip(&self.sum).zip(&self.sumsq) {
            let m = s / n;
            let sd = (q / n - m * m).max(NORM_EPS * NORM_EPS).sqrt();
            out.push(((v - m) / sd).clamp(-c, c));
        }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(x.len());
        self.normalize_into(x, &mut out);
        out
    }
}

/// Separate statistics for the state and the goal parts of the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub state: RunningNorm,
    pub goal: RunningNorm,
}

impl Normalizer {
    pub fn new(state_dim: usize, goal_dim: usize, clip_range: f64) -> Self {
        Self {
            state: RunningNorm::new(state_dim, clip_range),
            goal: RunningNorm::new(goal_dim, clip_range),
        }
    }

    /// Normalized `state ‖ goal`.
    pub fn obs(&self, state: &[f64], goal: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(state.len() + goal.len());
        self.state.normalize_into(state, &mut out);
        self.goal.normalize_into(goal, &mut out);
        out
    }
}
