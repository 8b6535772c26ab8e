//! Versioned binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "AACHERCK"
//! version  u32
//! d, p     u32, u32
//! obs_dim, action_dim, n_hidden  u32 ×3, then n_hidden × u32 widths
//! max_action f64
//! env      kind u8 (0 aubo_reach, 1 point_reach, 2 point_push, 3 point_slide),
//!          horizon u32, randomize_goal u8,
//!          threshold and workspace overrides: present u8, value f64 each
//! d actor members, then p critic members; each member is
//!     main net, target net, adam t (u64), adam m net, adam v net
//!   and each net is
//!     n_sizes u32, sizes u32..., output tag u8 (0 linear, 1 tanh), scale f64,
//!     then every parameter in layer order (weights row-major, bias,
//!     norm gain, norm bias)
//! state normalizer, goal normalizer: dim u32, count u64, clip f64,
//!     sum f64 × dim, sumsq f64 × dim
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::adam::AdamState;
use crate::envs::{Env, EnvConfig, EnvKind};
use crate::mlp::{MlpParams, OutputActivation};
use crate::networks::{Ensemble, Member, NetShape};
use crate::normalizer::{Normalizer, RunningNorm};

pub const MAGIC: &[u8; 8] = b"AACHERCK";
pub const VERSION: u32 = 1;

const ENV_KINDS: [EnvKind; 4] = [
    EnvKind::AuboReach,
    EnvKind::PointReach,
    EnvKind::PointPush,
    EnvKind::PointSlide,
];

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checkpoint shape disagreement: {0}")]
    Shape(String),
    #[error("checkpoint has {0} unexpected trailing bytes")]
    TrailingData(usize),
}

/// Everything needed to act with, or resume, a trained ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub ensemble: Ensemble,
    pub normalizer: Normalizer,
    /// Environment the policy was trained on.
    pub env: EnvConfig,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        let ens = &self.ensemble;
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u32(ens.adcp.d as u32);
        w.u32(ens.adcp.p as u32);
        w.u32(ens.shape.obs_dim as u32);
        w.u32(ens.shape.action_dim as u32);
        w.u32(ens.shape.hidden.len() as u32);
        for h in &ens.shape.hidden {
            w.u32(*h as u32);
        }
        w.f64(ens.shape.max_action);
        w.env(&self.env);
        for m in ens.actors.iter().chain(&ens.critics) {
            w.net(&m.main);
            w.net(&m.target);
            w.u64(m.opt.t);
            w.net(&m.opt.m);
            w.net(&m.opt.v);
        }
        w.norm(&self.normalizer.state);
        w.norm(&self.normalizer.goal);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let d = r.u32()? as usize;
        let p = r.u32()? as usize;
        if d == 0 || p == 0 {
            return Err(CheckpointError::Shape(format!("ensemble A{d}C{p}")));
        }
        let obs_dim = r.u32()? as usize;
        let action_dim = r.u32()? as usize;
        let n_hidden = r.u32()? as usize;
        let hidden = (0..n_hidden)
            .map(|_| r.u32().map(|x| x as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let max_action = r.f64()?;
        let shape = NetShape {
            obs_dim,
            action_dim,
            hidden,
            max_action,
        };
        let env = r.env()?;
        let spec = Env::new(env.clone())
            .map_err(|e| CheckpointError::Shape(e.to_string()))?
            .spec()
            .clone();
        if spec.state_dim + spec.goal_dim != obs_dim || spec.action_dim != action_dim {
            return Err(CheckpointError::Shape(format!(
                "{} expects observation width {} and action width {}, found {obs_dim} and {action_dim}",
                env.kind,
                spec.state_dim + spec.goal_dim,
                spec.action_dim
            )));
        }

        let mut member = || -> Result<Member, CheckpointError> {
            let main = r.net()?;
            let target = r.net()?;
            let t = r.u64()?;
            let m = r.net()?;
            let v = r.net()?;
            let mut opt = AdamState::new(&main);
            opt.t = t;
            opt.m = m;
            opt.v = v;
            Ok(Member { main, target, opt })
        };
        let actors = (0..d).map(|_| member()).collect::<Result<Vec<_>, _>>()?;
        let critics = (0..p).map(|_| member()).collect::<Result<Vec<_>, _>>()?;
        let ensemble = Ensemble::from_members(shape, actors, critics)
            .map_err(|e| CheckpointError::Shape(e.to_string()))?;

        let state = r.norm()?;
        let goal = r.norm()?;
        if state.dim() + goal.dim() != obs_dim {
            return Err(CheckpointError::Shape(format!(
                "normalizer widths {} + {} do not match observation width {obs_dim}",
                state.dim(),
                goal.dim()
            )));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingData(bytes.len() - r.pos));
        }
        Ok(Self {
            ensemble,
            normalizer: Normalizer { state, goal },
            env,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }

    fn net(&mut self, p: &MlpParams) {
        let sizes = p.layer_sizes();
        self.u32(sizes.len() as u32);
        for s in sizes {
            self.u32(s as u32);
        }
        match p.output {
            OutputActivation::Linear => {
                self.0.push(0);
                self.f64(1.0);
            }
            OutputActivation::Tanh { scale } => {
                self.0.push(1);
                self.f64(scale);
            }
        }
        for x in p.flatten() {
            self.f64(x);
        }
    }

    fn env(&mut self, env: &EnvConfig) {
        let kind = ENV_KINDS.iter().position(|k| *k == env.kind).unwrap();
        self.0.push(kind as u8);
        self.u32(env.horizon as u32);
        self.0.push(u8::from(env.randomize_goal));
        for v in [env.success_threshold, env.workspace] {
            self.0.push(u8::from(v.is_some()));
            self.f64(v.unwrap_or(0.0));
        }
    }

    fn norm(&mut self, n: &RunningNorm) {
        self.u32(n.dim() as u32);
        self.u64(n.count);
        self.f64(n.clip_range);
        for x in n.sum.iter().chain(&n.sumsq) {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

/// Upper bound on any single stored dimension; guards allocations when a
/// corrupt header claims absurd sizes.
const MAX_DIM: usize = 1 << 20;

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn dim(&mut self) -> Result<usize, CheckpointError> {
        let x = self.u32()? as usize;
        if x > MAX_DIM {
            return Err(CheckpointError::Shape(format!(
                "dimension {x} out of range"
            )));
        }
        Ok(x)
    }

    fn net(&mut self) -> Result<MlpParams, CheckpointError> {
        let n = self.dim()?;
        let sizes = (0..n).map(|_| self.dim()).collect::<Result<Vec<_>, _>>()?;
        let tag = self.u8()?;
        let scale = self.f64()?;
        let output = match tag {
            0 => OutputActivation::Linear,
            1 => OutputActivation::Tanh { scale },
            t => return Err(CheckpointError::Shape(format!("unknown output tag {t}"))),
        };
        let mut p =
            MlpParams::new(&sizes, output).map_err(|e| CheckpointError::Shape(e.to_string()))?;
        let count = p.num_params();
        if self.bytes.len() - self.pos < count * 8 {
            return Err(CheckpointError::Truncated(self.bytes.len()));
        }
        let flat = (0..count)
            .map(|_| self.f64())
            .collect::<Result<Vec<_>, _>>()?;
        p.assign_flat(&flat)
            .map_err(|e| CheckpointError::Shape(e.to_string()))?;
        Ok(p)
    }

    fn flag(&mut self) -> Result<bool, CheckpointError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(CheckpointError::Shape(format!("bad flag byte {x}"))),
        }
    }

    fn env(&mut self) -> Result<EnvConfig, CheckpointError> {
        let tag = self.u8()? as usize;
        let kind = *ENV_KINDS
            .get(tag)
            .ok_or_else(|| CheckpointError::Shape(format!("unknown environment tag {tag}")))?;
        let mut env = EnvConfig::new(kind);
        env.horizon = self.dim()?;
        env.randomize_goal = self.flag()?;
        let mut opt = || -> Result<Option<f64>, CheckpointError> {
            let present = self.flag()?;
            let v = self.f64()?;
            Ok(present.then_some(v))
        };
        env.success_threshold = opt()?;
        env.workspace = opt()?;
        Ok(env)
    }

    fn norm(&mut self) -> Result<RunningNorm, CheckpointError> {
        let dim = self.dim()?;
        let count = self.u64()?;
        let clip = self.f64()?;
        let mut n = RunningNorm::new(dim, clip);
        n.count = count;
        for i in 0..dim {
            n.sum[i] = self.f64()?;
        }
        for i in 0..dim {
            n.sumsq[i] = self.f64()?;
        }
        Ok(n)
    }
}
