//! Evaluation protocol: run a burn-in, then measure over the last `horizon`
//! steps.

use alloc::vec::Vec;

use crate::exec::Executor;
use crate::rollout::{per_hour, Controller, Episode};
use crate::sim::ScenarioConfig;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalWindow {
    /// Post-warmup steps run before measuring.
    pub burn_in_steps: u64,
    /// Measured steps.
    pub horizon: u64,
}

impl EvalWindow {
    pub const BURN_IN: u64 = 500;

    pub fn new(horizon: u64) -> Self {
        EvalWindow {
            burn_in_steps: Self::BURN_IN,
            horizon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub seed: u64,
    /// Vehicles that left the network during the window.
    pub exited: u64,
    /// Collision events during the window.
    pub collisions: u64,
    pub outflow_veh_hr: f64,
    pub collisions_per_hr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub outcomes: Vec<EpisodeOutcome>,
    pub mean_outflow: f64,
    /// Sample standard deviation (0 for a single episode).
    pub std_outflow: f64,
    pub mean_collisions_per_hr: f64,
    pub std_collisions_per_hr: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}

impl EvalSummary {
    pub fn from_outcomes(outcomes: Vec<EpisodeOutcome>) -> Self {
        let (mean_outflow, std_outflow) = mean_std(outcomes.iter().map(|o| o.outflow_veh_hr));
        let (mean_collisions_per_hr, std_collisions_per_hr) = mean_std(outcomes.iter().map(|o| o.collisions_per_hr));
        EvalSummary {
            outcomes,
            mean_outflow,
            std_outflow,
            mean_collisions_per_hr,
            std_collisions_per_hr,
        }
    }
}

/// One evaluation episode of `config` with the given seed.
pub fn evaluate_seed(
    config: &ScenarioConfig,
    controller: Controller<'_>,
    window: EvalWindow,
    seed: u64,
) -> Result<EpisodeOutcome> {
    let config = config.clone().with_seed(seed);
    let mut episode = Episode::start(&config, controller)?;
    for _ in 0..window.burn_in_steps {
        episode.step()?;
    }
    let (mut exited, mut collisions) = (0u64, 0u64);
    for _ in 0..window.horizon {
        let (_, m) = episode.step()?;
        exited += u64::from(m.outflow);
        collisions += u64::from(m.collisions);
    }
    Ok(EpisodeOutcome {
        seed,
        exited,
        collisions,
        outflow_veh_hr: per_hour(exited, window.horizon, config.delta_t),
        collisions_per_hr: per_hour(collisions, window.horizon, config.delta_t),
    })
}

/// Evaluates `n` episodes with seeds `config.seed + i`.
pub fn evaluate<E: Executor>(
    config: &ScenarioConfig,
    controller: Controller<'_>,
    window: EvalWindow,
    n: usize,
    exec: &E,
) -> Result<EvalSummary> {
    let seeds: Vec<u64> = (0..n as u64).map(|i| config.seed.wrapping_add(i)).collect();
    let outcomes = exec
        .map(&seeds, |&seed| evaluate_seed(config, controller, window, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::from_outcomes(outcomes))
}
