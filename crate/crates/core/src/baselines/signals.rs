use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::network::Axis;
use crate::sim::SimState;

/// Two-phase fixed-time plan shared by all intersections.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPlan {
    /// Horizontal green (s).
    pub tau_h: f64,
    /// Vertical green (s).
    pub tau_v: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub yellow: f64,
    #[serde(default)]
    pub all_red: f64,
}

impl SignalPlan {
    pub fn new(tau_h: f64, tau_v: f64) -> Self {
        SignalPlan {
            tau_h,
            tau_v,
            offset: 0.0,
            yellow: 0.0,
            all_red: 0.0,
        }
    }

    pub fn equal(tau: f64) -> Self {
        Self::new(tau, tau)
    }

    pub fn cycle(&self) -> f64 {
        self.tau_h + self.tau_v
    }

    pub fn validate(&self, delta_t: f64) -> Result<(), &'static str> {
        if !(self.tau_h >= delta_t && self.tau_v >= delta_t) || !self.cycle().is_finite() {
            return Err("signal phases must last at least one step");
        }
        if self.yellow != 0.0 || self.all_red != 0.0 {
            return Err("yellow and all-red times must be 0");
        }
        if !self.offset.is_finite() {
            return Err("signal offset must be finite");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseState {
    pub green: Axis,
    pub time_in_phase_s: f64,
}

impl Default for PhaseState {
    fn default() -> Self {
        PhaseState {
            green: Axis::Horizontal,
            time_in_phase_s: 0.0,
        }
    }
}

impl PhaseState {
    pub fn set(&mut self, green: Axis) {
        if green != self.green {
            self.green = green;
            self.time_in_phase_s = 0.0;
        }
    }
}

/// Green axis of a fixed-time plan at `clock_s`; the horizontal phase is the
/// half-open interval `[0, tau_h)` of each cycle.
pub fn fixed_signal(plan: &SignalPlan, clock_s: f64) -> Axis {
    let cycle = plan.cycle();
    let t = libm::fmod(clock_s + plan.offset, cycle);
    let t = if t < 0.0 { t + cycle } else { t };
    if t < plan.tau_h {
        Axis::Horizontal
    } else {
        Axis::Vertical
    }
}

/// Upstream approach count minus downstream exit count, summed over the
/// movements served by `axis`.
fn pressure(state: &SimState, inter: &crate::network::Intersection, axis: Axis) -> i64 {
    let net = state.network();
    inter
        .headings()
        .filter(|h| h.axis() == axis)
        .filter_map(|h| net.route_through(inter.id, h))
        .map(|(route, k)| {
            let up = state.approach_vehicles(route, k).count() as i64;
            let down = state.exit_vehicles(route, k).count() as i64;
            up - down
        })
        .sum()
}

/// MaxPressure phase decision per intersection: switch to the other phase
/// once `tau_min_s` has elapsed and its pressure is strictly larger.
pub fn max_pressure(state: &SimState, tau_min_s: f64) -> Vec<Axis> {
    state
        .network()
        .intersections()
        .iter()
        .zip(state.phases())
        .map(|(inter, phase)| {
            if phase.time_in_phase_s + 1e-9 < tau_min_s {
                return phase.green;
            }
            let other = match phase.green {
                Axis::Horizontal => Axis::Vertical,
                Axis::Vertical => Axis::Horizontal,
            };
            if pressure(state, inter, other) > pressure(state, inter, phase.green) {
                other
            } else {
                phase.green
            }
        })
        .collect()
}
