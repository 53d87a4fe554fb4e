//! Right of way for IDM-driven vehicles at junctions.
//!
//! Only the first vehicle on each approach lane (the lane leader) makes a
//! junction decision; everyone behind it simply follows. A leader either
//! drives freely, holds a grant (it has committed to crossing) or is told to
//! stop at the stop line this step.
//!
//! Arrival times are the earliest time the front can reach the junction: IDM
//! vehicles are assumed to accelerate at `a_max`, controlled AVs to hold
//! their speed. Two arrivals conflict when they are less than `t_gap` apart.
//!
//! * Unsignalized: a leader stops for occupants, for granted vehicles and for
//!   controlled AVs arriving within the gap window. Among the remaining IDM
//!   leaders the earliest arrival wins, vertical before horizontal on ties;
//!   the winner is granted once it is within `t_gap` of the junction.
//!   Controlled AVs never stop automatically.
//! * Priority: leaders on the priority axis never stop; the others need an
//!   empty junction and no priority arrival within the gap window.
//! * Signals: a red leader stops unless it can no longer brake comfortably
//!   (then it crosses on its grant); a green leader crosses unless an
//!   occupant or a granted red runner is in its way.
//!
//! In every mode except priority a going leader still stops for an occupant
//! it would hit, and of two granted conflicting leaders the later one drops
//! its grant if it can stop comfortably.
//!
//! In every mode a leader that can still stop waits at the line while its
//! exit lane lacks room to clear the junction, counting the distance the
//! last exit vehicle needs to brake comfortably.

use alloc::vec::Vec;

use super::{IntersectionControl, SimState, Vehicle, STOP_LINE_SETBACK};
use crate::dynamics;
use crate::network::{Axis, Heading, Intersection, RouteId};

/// Minimum separation between an occupant clearing the junction and the next
/// conflicting arrival (s).
const CLEAR_MARGIN_S: f64 = 0.5;

#[derive(Clone, Copy, Debug)]
struct Leader {
    route: RouteId,
    qidx: usize,
    heading: Heading,
    boundary: f64,
    arrival: f64,
    controlled: bool,
    granted: bool,
    yielding: bool,
    can_stop: bool,
    /// Entering now could leave it stuck inside the junction.
    exit_blocked: bool,
}

impl Leader {
    /// Precedence key: earlier arrival first, vertical axis on ties.
    fn precedes(&self, other: &Leader) -> bool {
        let rank = |h: Heading| match h.axis() {
            Axis::Vertical => 0,
            Axis::Horizontal => 1,
        };
        (self.arrival, rank(self.heading)) < (other.arrival, rank(other.heading))
    }

    fn near(&self, other: &Leader, t_gap: f64) -> bool {
        (self.arrival - other.arrival).abs() < t_gap
    }
}

#[derive(Clone, Copy, Debug)]
struct Occupant {
    heading: Heading,
    clear_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(super) struct Decision {
    route: RouteId,
    qidx: usize,
    stop_line: Option<f64>,
    granted: bool,
}

/// Earliest arrival of `v`'s front at the end of its current lane (s).
pub fn arrival_time(state: &SimState, v: &Vehicle) -> f64 {
    let boundary = state.boundary(state.lane_index(v.pos));
    let dist = (boundary - v.pos).max(0.0);
    if state.is_controllable(v) {
        if v.speed > 0.1 {
            dist / v.speed
        } else {
            f64::INFINITY
        }
    } else {
        dynamics::time_to_cover(dist, v.speed, state.config.idm.a_max, state.net.speed_limit())
    }
}

fn stop_target(boundary: f64, pos: f64) -> f64 {
    let line = boundary - STOP_LINE_SETBACK;
    if pos < line - 0.05 {
        line
    } else {
        boundary - 0.05
    }
}

fn collect(state: &SimState, inter: &Intersection) -> (Vec<Leader>, Vec<Occupant>) {
    let net = state.network();
    let b_comf = state.config.idm.b_comf;
    let mut leaders = Vec::new();
    let mut occupants = Vec::new();
    for heading in inter.headings() {
        let Some((route, k)) = net.route_through(inter.id, heading) else {
            continue;
        };
        let boundary = state.boundary(k);
        let start = boundary - net.lane_length();
        for (qidx, v) in state.routes[route.0].iter().enumerate() {
            if v.pos > boundary {
                if v.rear() < boundary {
                    let clear_time = if v.speed > 0.1 {
                        (boundary + v.length - v.pos) / v.speed
                    } else {
                        f64::INFINITY
                    };
                    occupants.push(Occupant { heading, clear_time });
                }
                continue;
            }
            if v.pos > start || (k == 0 && v.pos >= 0.0) {
                let avail = stop_target(boundary, v.pos) - v.pos;
                let can_stop = v.speed < 0.01 || (avail > 0.0 && v.speed * v.speed <= 2.0 * b_comf * avail);
                let exit_blocked = state.exit_vehicles(route, k).last().is_some_and(|x| {
                    let room = x.rear() - boundary + x.speed * x.speed / (2.0 * b_comf);
                    room < v.length + state.config.idm.s0
                });
                leaders.push(Leader {
                    route,
                    qidx,
                    heading,
                    boundary,
                    arrival: arrival_time(state, v),
                    controlled: state.is_controllable(v),
                    granted: v.granted,
                    yielding: v.yielding,
                    can_stop,
                    exit_blocked,
                });
            }
            break;
        }
    }
    (leaders, occupants)
}

fn blocked_by_occupant(e: &Leader, occupants: &[Occupant]) -> bool {
    occupants
        .iter()
        .any(|o| o.heading.conflicts_with(e.heading) && e.arrival < o.clear_time + CLEAR_MARGIN_S)
}

/// Decisions for the IDM-driven leaders of one intersection. Controlled AVs
/// take no junction decision.
fn decide(state: &SimState, inter: &Intersection, control: IntersectionControl) -> Vec<Decision> {
    let (mut leaders, occupants) = collect(state, inter);
    let t_gap = state.config.t_gap;
    let n = leaders.len();
    let mut stop = alloc::vec![false; n];

    let mut priority_axis = None;
    match control {
        IntersectionControl::None => {
            let blocked: Vec<bool> = (0..n)
                .map(|i| {
                    let e = &leaders[i];
                    (e.exit_blocked && e.can_stop)
                        || blocked_by_occupant(e, &occupants)
                        || leaders.iter().any(|c| {
                            c.heading.conflicts_with(e.heading) && (c.granted || c.controlled) && c.near(e, t_gap)
                        })
                })
                .collect();
            let mut grant = alloc::vec![false; n];
            for i in 0..n {
                let e = &leaders[i];
                if e.controlled || e.granted {
                    continue;
                }
                if blocked[i] {
                    stop[i] = true;
                    continue;
                }
                let wins = leaders.iter().enumerate().all(|(j, c)| {
                    j == i
                        || !c.heading.conflicts_with(e.heading)
                        || c.controlled
                        || c.granted
                        || blocked[j]
                        || !c.near(e, t_gap)
                        || e.precedes(c)
                });
                if wins {
                    grant[i] = e.arrival <= t_gap;
                } else {
                    stop[i] = true;
                }
            }
            for i in 0..n {
                leaders[i].granted |= grant[i];
            }
        }
        IntersectionControl::Priority { axis } => {
            priority_axis = Some(axis);
            for i in 0..n {
                let e = &mut leaders[i];
                if e.heading.axis() == axis {
                    if e.exit_blocked && e.can_stop {
                        stop[i] = true;
                        e.granted = false;
                    } else {
                        e.granted = true;
                    }
                }
            }
            for i in 0..n {
                let e = leaders[i];
                if e.heading.axis() == axis || e.granted {
                    continue;
                }
                let blocked = e.exit_blocked
                    || blocked_by_occupant(&e, &occupants)
                    || leaders
                        .iter()
                        .any(|c| c.heading.axis() == axis && c.heading.conflicts_with(e.heading) && c.near(&e, t_gap));
                if blocked {
                    stop[i] = true;
                } else {
                    leaders[i].granted = e.arrival <= t_gap;
                }
            }
        }
        IntersectionControl::Signal(_) | IntersectionControl::MaxPressure { .. } => {
            let green = state.green_axis(inter.id);
            for i in 0..n {
                let e = &mut leaders[i];
                if e.heading.axis() != green {
                    if e.yielding || e.can_stop {
                        stop[i] = true;
                        e.granted = false;
                    } else {
                        e.granted = true;
                    }
                }
            }
            for i in 0..n {
                let e = leaders[i];
                if e.heading.axis() != green || e.granted {
                    continue;
                }
                let blocked = (e.exit_blocked && e.can_stop)
                    || blocked_by_occupant(&e, &occupants)
                    || leaders
                        .iter()
                        .any(|c| c.heading.conflicts_with(e.heading) && c.granted && c.near(&e, t_gap));
                if blocked {
                    stop[i] = true;
                } else {
                    leaders[i].granted = e.arrival <= t_gap;
                }
            }
        }
    }

    // Safety pass for going IDM leaders.
    for i in 0..n {
        let e = leaders[i];
        if e.controlled || stop[i] || priority_axis == Some(e.heading.axis()) {
            continue;
        }
        if e.can_stop && (e.exit_blocked || blocked_by_occupant(&e, &occupants)) {
            stop[i] = true;
            leaders[i].granted = false;
            continue;
        }
        if e.granted && e.can_stop {
            let outranked = leaders.iter().enumerate().any(|(j, c)| {
                j != i
                    && !stop[j]
                    && c.granted
                    && c.heading.conflicts_with(e.heading)
                    && c.near(&e, t_gap)
                    && c.precedes(&e)
            });
            if outranked {
                stop[i] = true;
                leaders[i].granted = false;
            }
        }
    }

    leaders
        .iter()
        .zip(stop)
        .filter(|(l, _)| !l.controlled)
        .map(|(l, stop)| Decision {
            route: l.route,
            qidx: l.qidx,
            stop_line: stop.then(|| stop_target(l.boundary, state.routes[l.route.0][l.qidx].pos)),
            granted: l.granted && !stop,
        })
        .collect()
}

/// Refreshes the stop-line targets and junction flags of every vehicle.
pub(super) fn plan(state: &mut SimState) {
    for v in state.routes.iter_mut().flatten() {
        v.stop_line = None;
    }
    let net = state.net.clone();
    let control = state.config.control;
    let decisions: Vec<Decision> = net
        .intersections()
        .iter()
        .flat_map(|inter| decide(state, inter, control))
        .collect();
    for d in decisions {
        let v = &mut state.routes[d.route.0][d.qidx];
        v.stop_line = d.stop_line;
        v.yielding = d.stop_line.is_some();
        v.granted = d.granted;
    }
}

/// Distance from `vehicle`'s front to the stop target it must honour this
/// step, if it leads its approach lane and has to stop. Evaluates the same
/// rule as the step pipeline without mutating the state.
pub fn yield_rule(state: &SimState, vehicle: &Vehicle) -> Option<f64> {
    let net = state.network();
    let route = net.route(vehicle.route);
    let k = state.lane_index(vehicle.pos);
    let inter = net.intersection(*route.junctions.get(k)?);
    decide(state, inter, state.config.control)
        .into_iter()
        .find(|d| state.routes[d.route.0][d.qidx].id == vehicle.id)
        .and_then(|d| d.stop_line)
        .map(|line| line - vehicle.pos)
}

/// Stop targets (distance from the front) of every lane leader that must
/// stop under `control`, evaluated on the current state.
pub(crate) fn stop_targets(state: &SimState, control: IntersectionControl) -> Vec<(super::VehicleId, f64)> {
    state
        .network()
        .intersections()
        .iter()
        .flat_map(|inter| decide(state, inter, control))
        .filter_map(|d| {
            let v = &state.routes[d.route.0][d.qidx];
            d.stop_line.map(|line| (v.id, line - v.pos))
        })
        .collect()
}
