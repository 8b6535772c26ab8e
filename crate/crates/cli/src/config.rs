//! Run configuration: library defaults, overlaid by a flat TOML file, overlaid
//! by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use aacher_core::envs::{EnvConfig, EnvKind};
use aacher_core::networks::AdcpSpec;
use aacher_core::trainer::TrainConfig;
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_RUNS: usize = 20;

/// A multi-seed sweep of one training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `train.seed` is ignored; run `i` uses `base_seed + i`.
    pub train: TrainConfig,
    pub run_name: String,
    pub out_dir: PathBuf,
    pub n_runs: usize,
    pub base_seed: u64,
}

impl RunConfig {
    pub fn new(train: TrainConfig) -> Self {
        let run_name = format!("{}_{}", train.env.kind, train.adcp);
        Self {
            base_seed: train.seed,
            train,
            run_name,
            out_dir: PathBuf::from("results"),
            n_runs: DEFAULT_RUNS,
        }
    }

    pub fn seed_for(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }

    /// Training config for run `run`.
    pub fn run_config(&self, run: usize) -> TrainConfig {
        let mut c = self.train.clone();
        c.seed = self.seed_for(run);
        c
    }

    /// Directory holding every run of this sweep.
    pub fn sweep_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_name)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n_runs == 0 {
            return Err(CliError::Config("n_runs must be at least 1".into()));
        }
        if self.run_name.is_empty() || self.run_name.contains(['/', '\\']) {
            return Err(CliError::Config(format!(
                "run_name {:?} must be a non-empty plain name",
                self.run_name
            )));
        }
        self.train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Every key is optional; names follow the `TrainConfig` fields, with the
/// environment settings flattened in.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub env: Option<String>,
    pub adcp: Option<String>,
    pub hidden: Option<Vec<usize>>,
    pub epochs: Option<usize>,
    pub cycles_per_epoch: Option<usize>,
    pub rollout_steps: Option<usize>,
    pub opt_steps_per_cycle: Option<usize>,
    pub batch_size: Option<usize>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub actor_lr: Option<f64>,
    pub critic_lr: Option<f64>,
    pub noise_var: Option<f64>,
    pub her_k: Option<usize>,
    pub buffer_capacity: Option<usize>,
    pub l2_coeff: Option<f64>,
    pub action_l2: Option<f64>,
    pub clip_range: Option<f64>,
    pub eval_episodes: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
    pub success_threshold: Option<f64>,
    pub workspace: Option<f64>,
    pub randomize_goal: Option<bool>,
    pub run_name: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub n_runs: Option<usize>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(one_line(&e.to_string())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fill unset keys from `other`, which takes precedence.
    pub fn overlay(self, other: FileConfig) -> FileConfig {
        macro_rules! pick {
            ($($f:ident),*) => { FileConfig { $($f: other.$f.or(self.$f)),* } };
        }
        pick!(
            env,
            adcp,
            hidden,
            epochs,
            cycles_per_epoch,
            rollout_steps,
            opt_steps_per_cycle,
            batch_size,
            gamma,
            tau,
            actor_lr,
            critic_lr,
            noise_var,
            her_k,
            buffer_capacity,
            l2_coeff,
            action_l2,
            clip_range,
            eval_episodes,
            seed,
            horizon,
            success_threshold,
            workspace,
            randomize_goal,
            run_name,
            out_dir,
            n_runs
        )
    }

    /// Resolve against the library defaults. `env` and `adcp` are required.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        let env_name = self
            .env
            .ok_or_else(|| CliError::Config("no environment given (--env or `env` key)".into()))?;
        let kind: EnvKind = env_name
            .parse()
            .map_err(|e: aacher_core::Error| CliError::Config(e.to_string()))?;
        let adcp_text = self
            .adcp
            .ok_or_else(|| CliError::Config("no ensemble given (--adcp or `adcp` key)".into()))?;
        let adcp: AdcpSpec = adcp_text
            .parse()
            .map_err(|e: aacher_core::networks::ParseAdcpError| CliError::Config(e.to_string()))?;

        let mut env = EnvConfig::new(kind);
        if let Some(h) = self.horizon {
            env.horizon = h;
        }
        env.success_threshold = self.success_threshold;
        env.workspace = self.workspace;
        env.randomize_goal = self.randomize_goal.unwrap_or(false);

        let mut t = TrainConfig::new(adcp, env);
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { t.$f = v; })* };
        }
        set!(
            hidden,
            epochs,
            cycles_per_epoch,
            opt_steps_per_cycle,
            batch_size,
            gamma,
            tau,
            actor_lr,
            critic_lr,
            noise_var,
            her_k,
            buffer_capacity,
            l2_coeff,
            action_l2,
            clip_range,
            eval_episodes,
            seed
        );
        match self.rollout_steps {
            Some(v) => t.rollout_steps = v,
            None => t.rollout_steps = t.env.horizon,
        }

        let mut run = RunConfig::new(t);
        if let Some(n) = self.run_name {
            run.run_name = n;
        }
        if let Some(d) = self.out_dir {
            run.out_dir = d;
        }
        if let Some(n) = self.n_runs {
            run.n_runs = n;
        }
        run.validate()?;
        Ok(run)
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
