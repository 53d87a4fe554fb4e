//! Running a controller in the simulator.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::SignalPlan;
use crate::network::Axis;
use crate::nn::PolicyParams;
use crate::obs::{observe_all, Observation};
use crate::rl::{raw_reward, RewardWeights};
use crate::sim::{Action, AvActions, IntersectionControl, ScenarioConfig, SimState, StepMetrics, VehicleId};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ActionMode {
    /// Draw each action from the policy distribution.
    #[default]
    Sample,
    /// Take the most likely action (first on ties).
    Greedy,
}

#[derive(Clone, Copy, Debug)]
pub enum Controller<'a> {
    /// Shared policy driving every controllable AV; IDM vehicles use gap
    /// acceptance at the unsignalized junctions.
    Policy {
        params: &'a PolicyParams,
        mode: ActionMode,
    },
    Signal(SignalPlan),
    MaxPressure {
        tau_min_s: f64,
    },
    Priority(Axis),
    /// No control at all: AVs drive as IDM vehicles, junctions are
    /// unsignalized.
    AllIdm,
}

impl Controller<'_> {
    pub fn control(&self) -> IntersectionControl {
        match *self {
            Controller::Policy { .. } | Controller::AllIdm => IntersectionControl::None,
            Controller::Signal(plan) => IntersectionControl::Signal(plan),
            Controller::MaxPressure { tau_min_s } => IntersectionControl::MaxPressure { tau_min_s },
            Controller::Priority(axis) => IntersectionControl::Priority { axis },
        }
    }

    /// `config` with this controller's intersection control.
    pub fn configure(&self, config: &ScenarioConfig) -> ScenarioConfig {
        config.clone().with_control(self.control())
    }
}

/// Decision of one AV in one step.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentStep {
    pub vehicle: VehicleId,
    pub obs: Observation,
    pub action: Action,
    pub probs: [f64; Action::COUNT],
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub agents: Vec<AgentStep>,
    pub metrics: StepMetrics,
    /// Unnormalized reward.
    pub raw_reward: f64,
    /// Normalized reward, filled in by the trainer.
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Scenario the trajectory was sampled from; `config.seed` is its seed.
    pub config: ScenarioConfig,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn total_outflow(&self) -> u64 {
        self.steps.iter().map(|s| u64::from(s.metrics.outflow)).sum()
    }

    pub fn total_collisions(&self) -> u64 {
        self.steps.iter().map(|s| u64::from(s.metrics.collisions)).sum()
    }

    /// Outflow over the whole trajectory (veh/hr).
    pub fn outflow_rate(&self) -> f64 {
        per_hour(self.total_outflow(), self.steps.len() as u64, self.config.delta_t)
    }
}

pub(crate) fn per_hour(count: u64, steps: u64, delta_t: f64) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    count as f64 * 3600.0 / (steps as f64 * delta_t)
}

/// Picks an action index from `probs`.
pub fn choose_action<R: Rng + ?Sized>(probs: &[f64], mode: ActionMode, rng: &mut R) -> usize {
    match mode {
        ActionMode::Greedy => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            best
        }
        ActionMode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        }
    }
}

/// A simulation driven by one controller. Policy actions come from their own
/// random stream so the simulator noise does not depend on the policy.
#[derive(Clone, Debug)]
pub struct Episode<'a> {
    state: SimState,
    controller: Controller<'a>,
    action_rng: ChaCha8Rng,
}

impl<'a> Episode<'a> {
    /// Resets the simulator (warmup included) for `config` under `controller`.
    pub fn start(config: &ScenarioConfig, controller: Controller<'a>) -> Result<Self> {
        if let Controller::Policy { params, .. } = controller {
            let dims = params.dims();
            if dims[0] != crate::obs::OBS_DIM || dims[3] != Action::COUNT {
                return Err(Error::LayoutMismatch {
                    expected: crate::nn::DEFAULT_DIMS,
                    actual: dims,
                });
            }
        }
        let config = controller.configure(config);
        let mut state = SimState::reset(&config)?;
        state.set_av_control(matches!(controller, Controller::Policy { .. }));
        let mut action_rng = ChaCha8Rng::seed_from_u64(config.seed);
        action_rng.set_stream(1);
        Ok(Episode {
            state,
            controller,
            action_rng,
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    /// Chooses actions for every controllable AV and advances one step.
    pub fn step(&mut self) -> Result<(Vec<AgentStep>, StepMetrics)> {
        let mut agents = Vec::new();
        let mut actions = AvActions::new();
        if let Controller::Policy { params, mode } = self.controller {
            for (vehicle, obs) in observe_all(&self.state)? {
                let p = params.forward(obs.as_slice())?;
                let probs: [f64; Action::COUNT] = p.as_slice().try_into().map_err(|_| Error::ShapeMismatch {
                    expected: Action::COUNT,
                    actual: p.len(),
                })?;
                let index = choose_action(&probs, mode, &mut self.action_rng);
                let action = Action::from_index(index).expect("index below action count");
                actions.insert(vehicle, action);
                agents.push(AgentStep {
                    vehicle,
                    obs,
                    action,
                    probs,
                });
            }
        }
        let metrics = self.state.step(&actions)?;
        Ok((agents, metrics))
    }
}

/// Samples one trajectory of `config.horizon` post-warmup steps.
pub fn sample_trajectory(
    config: &ScenarioConfig,
    params: &PolicyParams,
    mode: ActionMode,
    weights: &RewardWeights,
) -> Result<Trajectory> {
    let mut episode = Episode::start(config, Controller::Policy { params, mode })?;
    let mut steps = Vec::with_capacity(config.horizon as usize);
    for _ in 0..config.horizon {
        let (agents, metrics) = episode.step()?;
        steps.push(StepRecord {
            agents,
            metrics,
            raw_reward: raw_reward(&metrics, weights),
            reward: 0.0,
        });
    }
    Ok(Trajectory {
        config: episode.state.config().clone(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_takes_first_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(choose_action(&[0.2, 0.4, 0.4], ActionMode::Greedy, &mut rng), 1);
        assert_eq!(choose_action(&[0.5, 0.1, 0.4], ActionMode::Greedy, &mut rng), 0);
    }

    #[test]
    fn sampling_follows_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let probs = [0.1, 0.6, 0.3];
        let mut counts = [0u32; 3];
        for _ in 0..20_000 {
            counts[choose_action(&probs, ActionMode::Sample, &mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(probs) {
            assert!((f64::from(*c) / 20_000.0 - p).abs() < 0.015);
        }
        assert_eq!(choose_action(&[0.0, 0.0, 1.0], ActionMode::Sample, &mut rng), 2);
    }

    #[test]
    fn per_hour_rate() {
        assert_eq!(per_hour(500, 2000, 0.5), 1800.0);
        assert_eq!(per_hour(0, 0, 0.5), 0.0);
    }
}
