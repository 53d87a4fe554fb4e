use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{reinforce_gradient, RewardNormalizer, RewardWeights};
use crate::exec::Executor;
use crate::nn::{Checkpoint, PolicyParams, RmsProp, DEFAULT_DIMS};
use crate::rollout::{sample_trajectory, ActionMode, Trajectory};
use crate::sim::ScenarioConfig;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub lambda_o: f64,
    pub lambda_c: f64,
    /// Trajectories per update, spread over all environments.
    pub batch_size: usize,
    /// Steps per trajectory after warmup.
    pub horizon: u64,
    pub max_updates: u64,
    pub checkpoint_interval: u64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn profile(profile: Profile) -> Self {
        let (batch_size, horizon, max_updates) = match profile {
            Profile::Desk => (32, 500, 60),
            Profile::Paper => (640, 2000, 200),
        };
        TrainConfig {
            gamma: 0.99,
            learning_rate: 0.001,
            lambda_o: 1.0,
            lambda_c: 5.0,
            batch_size,
            horizon,
            max_updates,
            checkpoint_interval: 5,
            seed: 0,
        }
    }

    pub fn weights(&self) -> RewardWeights {
        RewardWeights {
            lambda_o: self.lambda_o,
            lambda_c: self.lambda_c,
        }
    }

    pub fn validate(&self, n_envs: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if n_envs == 0 {
            return bad("at least one inflow configuration is required");
        }
        if self.batch_size < n_envs {
            return bad("batch_size must be at least the number of inflow configurations");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.checkpoint_interval == 0 {
            return bad("checkpoint_interval must be positive");
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::profile(Profile::Desk)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulator seed of trajectory `traj` of environment `env` at `update`.
pub fn trajectory_seed(seed: u64, env: usize, update: u64, traj: usize) -> u64 {
    splitmix(splitmix(splitmix(seed ^ env as u64) ^ update) ^ traj as u64)
}

/// Trajectories per environment: `batch / n` each, the remainder going to
/// the first environments.
pub fn allocate(batch: usize, n_envs: usize) -> Vec<usize> {
    (0..n_envs)
        .map(|i| batch / n_envs + usize::from(i < batch % n_envs))
        .collect()
}

/// Statistics of one training batch.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport {
    /// Number of gradient steps applied to the parameters that collected
    /// this batch.
    pub update: u64,
    pub mean_outflow: f64,
    pub std_outflow: f64,
    pub mean_collisions: f64,
    /// Norm of the gradient applied after this batch; `None` for the last.
    pub grad_norm: Option<f64>,
    pub checkpoint: Option<Checkpoint>,
}

/// REINFORCE with one environment per inflow configuration.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    envs: Vec<ScenarioConfig>,
    params: PolicyParams,
    opt: RmsProp,
    normalizer: RewardNormalizer,
    update: u64,
}

impl Trainer {
    /// Starts from `params`, or from a Glorot initialization seeded by
    /// `config.seed`.
    pub fn new(config: TrainConfig, envs: Vec<ScenarioConfig>, params: Option<PolicyParams>) -> Result<Self> {
        config.validate(envs.len())?;
        for env in &envs {
            env.validate()?;
        }
        let params = match params {
            Some(p) => {
                let dims = p.dims();
                if dims[0] != DEFAULT_DIMS[0] || dims[3] != DEFAULT_DIMS[3] {
                    return Err(Error::LayoutMismatch {
                        expected: DEFAULT_DIMS,
                        actual: dims,
                    });
                }
                p
            }
            None => PolicyParams::glorot(DEFAULT_DIMS, &mut ChaCha8Rng::seed_from_u64(config.seed)),
        };
        Ok(Trainer {
            opt: RmsProp::new(params.len(), config.learning_rate),
            normalizer: RewardNormalizer::new(config.gamma),
            envs,
            params,
            config,
            update: 0,
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &RewardNormalizer {
        &self.normalizer
    }

    /// Gradient steps applied so far.
    pub fn update_index(&self) -> u64 {
        self.update
    }

    /// Samples one batch with the current parameters, ordered by
    /// (environment, trajectory).
    pub fn collect<E: Executor>(&self, exec: &E) -> Result<Vec<Trajectory>> {
        let mut jobs = Vec::with_capacity(self.config.batch_size);
        for (env, n) in allocate(self.config.batch_size, self.envs.len())
            .into_iter()
            .enumerate()
        {
            for traj in 0..n {
                let mut cfg = self.envs[env].clone();
                cfg.horizon = self.config.horizon;
                cfg.seed = trajectory_seed(self.config.seed, env, self.update, traj);
                jobs.push(cfg);
            }
        }
        let weights = self.config.weights();
        exec.map(&jobs, |cfg| {
            sample_trajectory(cfg, &self.params, ActionMode::Sample, &weights)
        })
        .into_iter()
        .collect()
    }

    /// Fills in normalized rewards, trajectory by trajectory in batch order.
    pub fn normalize(&mut self, batch: &mut [Trajectory]) {
        for traj in batch {
            self.normalizer.begin_episode();
            for step in &mut traj.steps {
                step.reward = self.normalizer.normalize(step.raw_reward);
            }
        }
    }

    /// Applies one REINFORCE step from a normalized batch and returns the
    /// gradient norm.
    pub fn apply<E: Executor>(&mut self, batch: &[Trajectory], exec: &E) -> Result<f64> {
        let grad = reinforce_gradient(&self.params, batch, self.config.gamma, exec)?;
        self.opt.step(&mut self.params, &grad)?;
        self.update += 1;
        Ok(libm::sqrt(grad.iter().map(|g| g * g).sum()))
    }

    /// Collects a batch for the current parameters, checkpoints them when due
    /// and, unless the last update is reached, takes a gradient step.
    pub fn step<E: Executor>(&mut self, exec: &E) -> Result<UpdateReport> {
        let mut batch = self.collect(exec)?;
        let n = batch.len() as f64;
        let outflows: Vec<f64> = batch.iter().map(Trajectory::outflow_rate).collect();
        let mean_outflow = outflows.iter().sum::<f64>() / n;
        let std_outflow = libm::sqrt(
            outflows
                .iter()
                .map(|x| (x - mean_outflow) * (x - mean_outflow))
                .sum::<f64>()
                / n,
        );
        let mean_collisions = batch.iter().map(|t| t.total_collisions() as f64).sum::<f64>() / n;

        let update = self.update;
        let last = update >= self.config.max_updates;
        let checkpoint = (update.is_multiple_of(self.config.checkpoint_interval) || last).then(|| Checkpoint {
            params: self.params.clone(),
            update,
            mean_outflow,
        });
        let grad_norm = if last {
            None
        } else {
            self.normalize(&mut batch);
            Some(self.apply(&batch, exec)?)
        };
        Ok(UpdateReport {
            update,
            mean_outflow,
            std_outflow,
            mean_collisions,
            grad_norm,
            checkpoint,
        })
    }

    /// Runs until `max_updates` gradient steps have been applied and returns
    /// the checkpoint history. `on_report` sees every batch as it finishes.
    pub fn train<E, F>(&mut self, exec: &E, mut on_report: F) -> Result<Vec<Checkpoint>>
    where
        E: Executor,
        F: FnMut(&UpdateReport) -> Result<()>,
    {
        let mut history = Vec::new();
        loop {
            let report = self.step(exec)?;
            on_report(&report)?;
            let done = report.grad_norm.is_none();
            history.extend(report.checkpoint);
            if done {
                return Ok(history);
            }
        }
    }
}

/// Index of the checkpoint with the best batch-mean outflow, earliest on
/// ties.
pub fn select_best(history: &[Checkpoint]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in history.iter().enumerate() {
        if best.is_none_or(|b| c.mean_outflow > history[b].mean_outflow) {
            best = Some(i);
        }
    }
    best.ok_or(Error::EmptyHistory)
}

/// Policy for a target scenario: the source parameters as they are
/// (zero-shot), or the best checkpoint after finetuning on `targets`.
pub fn transfer<E: Executor>(
    source: &Checkpoint,
    targets: &[ScenarioConfig],
    finetune: Option<&TrainConfig>,
    exec: &E,
) -> Result<PolicyParams> {
    source.expect_dims(DEFAULT_DIMS)?;
    let Some(config) = finetune else {
        return Ok(source.params.clone());
    };
    let mut trainer = Trainer::new(config.clone(), targets.to_vec(), Some(source.params.clone()))?;
    let history = trainer.train(exec, |_| Ok(()))?;
    let best = select_best(&history)?;
    Ok(history[best].params.clone())
}
