use serde::{Deserialize, Serialize};

use crate::sim::StepMetrics;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub lambda_o: f64,
    pub lambda_c: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            lambda_o: 1.0,
            lambda_c: 5.0,
        }
    }
}

/// `lambda_o * outflow - lambda_c * collisions` of one step.
pub fn raw_reward(metrics: &StepMetrics, w: &RewardWeights) -> f64 {
    w.lambda_o * f64::from(metrics.outflow) - w.lambda_c * f64::from(metrics.collisions)
}

/// Running reward normalization.
///
/// The raw reward is centred by its running mean over every step seen and
/// scaled by the running standard deviation of the discounted return `R'`,
/// which restarts at zero with each episode. Both statistics persist across
/// episodes and updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    pub gamma: f64,
    /// Floor of the divisor.
    pub eps: f64,
    count: u64,
    mean: f64,
    ret: f64,
    ret_count: u64,
    ret_mean: f64,
    ret_m2: f64,
}

impl RewardNormalizer {
    pub const EPS: f64 = 1e-4;

    pub fn new(gamma: f64) -> Self {
        RewardNormalizer {
            gamma,
            eps: Self::EPS,
            count: 0,
            mean: 0.0,
            ret: 0.0,
            ret_count: 0,
            ret_mean: 0.0,
            ret_m2: 0.0,
        }
    }

    pub fn begin_episode(&mut self) {
        self.ret = 0.0;
    }

    /// Running mean of the raw reward.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Running (population) standard deviation of `R'`.
    pub fn std(&self) -> f64 {
        if self.ret_count == 0 {
            0.0
        } else {
            libm::sqrt(self.ret_m2 / self.ret_count as f64)
        }
    }

    /// Current discounted return of the episode.
    pub fn running_return(&self) -> f64 {
        self.ret
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Updates the statistics with `raw` and returns its normalized value.
    pub fn normalize(&mut self, raw: f64) -> f64 {
        self.count += 1;
        self.mean += (raw - self.mean) / self.count as f64;

        self.ret = self.gamma * self.ret + raw;
        self.ret_count += 1;
        let delta = self.ret - self.ret_mean;
        self.ret_mean += delta / self.ret_count as f64;
        self.ret_m2 += delta * (self.ret - self.ret_mean);

        (raw - self.mean) / self.std().max(self.eps)
    }
}
