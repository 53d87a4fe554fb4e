//! Longitudinal vehicle dynamics.

use serde::{Deserialize, Serialize};

/// Hard braking bound applied when clamping IDM accelerations (m/s²).
pub const B_EMERGENCY: f64 = 9.0;

/// Intelligent Driver Model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Desired time headway (s).
    pub time_headway: f64,
    /// Minimum standstill gap (m).
    pub s0: f64,
    /// Maximum acceleration (m/s²).
    pub a_max: f64,
    /// Comfortable deceleration (m/s²).
    pub b_comf: f64,
    pub delta_exp: f64,
    /// Standard deviation of the additive acceleration noise (m/s²).
    pub noise_sigma: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            v0: 13.0,
            time_headway: 1.0,
            s0: 2.5,
            a_max: 2.6,
            b_comf: 4.5,
            delta_exp: 4.0,
            noise_sigma: 0.2,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        let positive = [self.v0, self.time_headway, self.s0, self.a_max, self.b_comf];
        if positive.iter().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err("IDM v0, time_headway, s0, a_max and b_comf must be positive");
        }
        if self.delta_exp.is_nan() || self.delta_exp < 1.0 {
            return Err("IDM delta_exp must be at least 1");
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err("IDM noise_sigma must be non-negative");
        }
        Ok(())
    }

    /// Desired dynamic gap s*.
    fn desired_gap(&self, v: f64, v_lead: f64) -> f64 {
        let approach = v * (v - v_lead) / (2.0 * libm::sqrt(self.a_max * self.b_comf));
        self.s0 + (v * self.time_headway + approach).max(0.0)
    }
}

/// Acceleration limits of controlled vehicles (m/s²).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvLimits {
    pub c_accel: f64,
    pub c_decel: f64,
}

impl Default for AvLimits {
    fn default() -> Self {
        AvLimits {
            c_accel: 1.5,
            c_decel: 3.5,
        }
    }
}

impl AvLimits {
    pub fn validate(&self, idm: &IdmParams) -> Result<(), &'static str> {
        if !(self.c_accel > 0.0 && self.c_decel > 0.0) {
            return Err("AV limits must be positive");
        }
        if !(self.c_accel < idm.a_max && self.c_decel < idm.b_comf) {
            return Err("AV limits must be below the IDM maxima");
        }
        Ok(())
    }
}

/// Leader as seen by a follower: its speed and the bumper-to-bumper gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeaderGap {
    pub v_lead: f64,
    pub gap: f64,
}

/// Unclamped, noise-free IDM acceleration. `leader = None` is a free road.
pub fn idm_raw(v: f64, leader: Option<LeaderGap>, params: &IdmParams) -> f64 {
    let free = 1.0 - libm::pow(v / params.v0, params.delta_exp);
    let interaction = match leader {
        Some(LeaderGap { v_lead, gap }) => {
            let ratio = params.desired_gap(v, v_lead) / gap;
            ratio * ratio
        }
        None => 0.0,
    };
    params.a_max * (free - interaction)
}

/// Clamps an IDM acceleration into `[-B_EMERGENCY, a_max]`.
pub fn clamp_idm(accel: f64, params: &IdmParams) -> f64 {
    accel.clamp(-B_EMERGENCY, params.a_max)
}

/// IDM acceleration with additive noise, clamped to `[-B_EMERGENCY, a_max]`.
///
/// Pass `gap = f64::INFINITY` for a free road; `v_lead` is then ignored. The
/// caller must never pass `gap <= 0`; that situation is a collision.
pub fn idm_accel(v: f64, v_lead: f64, gap: f64, params: &IdmParams, noise: f64) -> f64 {
    debug_assert!(gap > 0.0, "IDM called with non-positive gap");
    let leader = gap.is_finite().then_some(LeaderGap { v_lead, gap });
    clamp_idm(idm_raw(v, leader, params) + noise, params)
}

/// IDM acceleration toward a virtual standing leader at the stop line,
/// limited by the real leader when one is given.
pub fn accel_toward_stop_line(v: f64, dist_to_line: f64, leader: Option<LeaderGap>, params: &IdmParams) -> f64 {
    let line = idm_raw(
        v,
        Some(LeaderGap {
            v_lead: 0.0,
            gap: dist_to_line,
        }),
        params,
    );
    let accel = match leader {
        Some(l) => line.min(idm_raw(v, Some(l), params)),
        None => line,
    };
    clamp_idm(accel, params)
}

/// Speed-limited ballistic update over one step of piecewise-constant
/// acceleration. Displacement uses the mean of the clamped endpoint speeds.
pub fn ballistic_step(x: f64, v: f64, accel: f64, delta_t: f64, v_max: f64) -> (f64, f64) {
    let v_next = (v + accel * delta_t).clamp(0.0, v_max);
    (x + 0.5 * (v + v_next) * delta_t, v_next)
}

/// Earliest time to cover `dist` from speed `v` when accelerating at `accel`
/// up to `v_max`.
pub fn time_to_cover(dist: f64, v: f64, accel: f64, v_max: f64) -> f64 {
    if dist <= 0.0 {
        return 0.0;
    }
    let v = v.min(v_max);
    if accel <= 0.0 || v >= v_max {
        return if v > 0.0 { dist / v } else { f64::INFINITY };
    }
    let t_cap = (v_max - v) / accel;
    let d_cap = v * t_cap + 0.5 * accel * t_cap * t_cap;
    if dist <= d_cap {
        (-v + libm::sqrt(v * v + 2.0 * accel * dist)) / accel
    } else {
        t_cap + (dist - d_cap) / v_max
    }
}
