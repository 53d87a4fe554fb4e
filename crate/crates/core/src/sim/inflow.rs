//! Equally spaced inflows with deterministic AV tagging.

use super::{SimState, Vehicle, VehicleClass, VEHICLE_LENGTH};

/// Per-entry-lane arrival schedule.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct InflowClock {
    pub headway_s: f64,
    pub next_due_s: f64,
    /// Vehicles inserted so far; numbers the arrivals for AV tagging.
    pub arrivals: u64,
}

impl InflowClock {
    pub fn new(rate_veh_hr: f64) -> Self {
        let headway_s = if rate_veh_hr > 0.0 {
            3600.0 / rate_veh_hr
        } else {
            f64::INFINITY
        };
        InflowClock {
            headway_s,
            next_due_s: if headway_s.is_finite() { 0.0 } else { f64::INFINITY },
            arrivals: 0,
        }
    }
}

/// Whether arrival `n` (0-based) on a lane is an AV under penetration `p`:
/// `floor((n + 1) p) > floor(n p)`, which spreads AVs evenly.
pub fn is_av_arrival(n: u64, p: f64) -> bool {
    // Guards against products like 3 * (1/3) landing just below an integer.
    const EPS: f64 = 1e-9;
    let hits = |k: u64| libm::floor(k as f64 * p + EPS);
    hits(n + 1) > hits(n)
}

/// Inserts every vehicle that became due during the step that just ended.
///
/// A due vehicle is placed where it would be had it entered at its exact due
/// time, so realized entry headways equal the nominal headway even when it is
/// not a multiple of the step. It enters at the speed limit, reduced only as
/// far as needed to brake comfortably behind a slow last vehicle; if the gap
/// to that vehicle is below `s0 + length` it is dropped.
pub(super) fn spawn_inflows(state: &mut SimState) -> u32 {
    let now = (state.elapsed_steps + 1) as f64 * state.config.delta_t;
    let idm = state.config.idm;
    let v_limit = state.net.speed_limit();
    let penetration = state.config.penetration;
    let mut dropped = 0;

    for r in 0..state.routes.len() {
        while state.inflows[r].next_due_s <= now + 1e-9 {
            let due = state.inflows[r].next_due_s;
            state.inflows[r].next_due_s += state.inflows[r].headway_s;
            let since_due = (now - due).max(0.0);

            let (speed, pos) = match state.routes[r].back() {
                None => (v_limit, v_limit * since_due),
                Some(last) => {
                    let room = last.rear() - idm.s0;
                    if room < 0.0 {
                        dropped += 1;
                        continue;
                    }
                    let safe = libm::sqrt(last.speed * last.speed + 2.0 * idm.b_comf * room);
                    let speed = v_limit.min(safe);
                    (speed, (speed * since_due).min(room))
                }
            };

            let n = state.inflows[r].arrivals;
            state.inflows[r].arrivals += 1;
            let class = if is_av_arrival(n, penetration) {
                VehicleClass::Av
            } else {
                VehicleClass::Idm
            };
            let id = state.next_vehicle_id();
            state.routes[r].push_back(Vehicle {
                id,
                class,
                route: crate::network::RouteId(r),
                pos,
                prev_pos: pos,
                speed,
                length: VEHICLE_LENGTH,
                entry_time: due,
                granted: false,
                yielding: false,
                stop_line: None,
            });
            state.totals.entered += 1;
        }
    }
    state.totals.dropped += u64::from(dropped);
    dropped
}
