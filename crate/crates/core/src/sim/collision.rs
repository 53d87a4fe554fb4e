//! Collision detection.
//!
//! In-lane: a follower's front is past its leader's rear. Consecutive
//! vehicles of one route queue are compared, so the check also covers a
//! leader that is straddling a lane boundary.
//!
//! Junction: a vehicle occupies an intersection while its body spans the
//! boundary between approach and exit lane, i.e. while its front lies in
//! `(b, b + length)` for the junction's route distance `b`. The front is
//! interpolated linearly across the step, so a vehicle that sweeps through
//! the conflict point between two samples is still seen.

use alloc::vec::Vec;

use super::{SimState, Vehicle, VehicleId};
use crate::network::IntersectionId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollisionKind {
    InLane,
    Junction(IntersectionId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CollisionEvent {
    pub kind: CollisionKind,
    pub first: VehicleId,
    pub second: VehicleId,
}

/// Fraction-of-step interval `(t_in, t_out)` during which the front moving
/// from `x0` to `x1` lies strictly inside `(b, b + length)`. Times are in
/// units of the step, within `[0, 1]`.
pub fn occupancy_interval(x0: f64, x1: f64, b: f64, length: f64) -> Option<(f64, f64)> {
    let (lo, hi) = (b, b + length);
    if x1 <= x0 {
        return (x0 > lo && x0 < hi).then_some((0.0, 1.0));
    }
    let t = |x: f64| ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
    let (t_in, t_out) = (t(lo), t(hi));
    (t_out > t_in).then_some((t_in, t_out))
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.max(b.0) < a.1.min(b.1)
}

/// Collision events of the current state. Each vehicle takes part in at most
/// one event; in-lane overlaps are resolved before junction conflicts.
pub fn detect_collisions(state: &SimState) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    let mut involved: Vec<VehicleId> = Vec::new();

    for r in 0..state.routes.len() {
        let queue = &state.routes[r];
        for i in 1..queue.len() {
            let (leader, follower) = (&queue[i - 1], &queue[i]);
            if involved.contains(&leader.id) || involved.contains(&follower.id) {
                continue;
            }
            if follower.pos > leader.rear() {
                events.push(CollisionEvent {
                    kind: CollisionKind::InLane,
                    first: leader.id,
                    second: follower.id,
                });
                involved.extend([leader.id, follower.id]);
            }
        }
    }

    let net = state.network();
    for inter in net.intersections() {
        for &(ha, hb) in &inter.conflict_pairs {
            let (Some((ra, ka)), Some((rb, kb))) = (net.route_through(inter.id, ha), net.route_through(inter.id, hb))
            else {
                continue;
            };
            let (ba, bb) = (state.boundary(ka), state.boundary(kb));
            let sweeping = |queue: &'_ alloc::collections::VecDeque<Vehicle>, b: f64| -> Vec<(VehicleId, (f64, f64))> {
                queue
                    .iter()
                    .filter_map(|v| occupancy_interval(v.prev_pos, v.pos, b, v.length).map(|iv| (v.id, iv)))
                    .collect()
            };
            let a_side = sweeping(&state.routes[ra.0], ba);
            if a_side.is_empty() {
                continue;
            }
            let b_side = sweeping(&state.routes[rb.0], bb);
            for &(ida, iva) in &a_side {
                for &(idb, ivb) in &b_side {
                    if involved.contains(&ida) || involved.contains(&idb) {
                        continue;
                    }
                    if overlaps(iva, ivb) {
                        events.push(CollisionEvent {
                            kind: CollisionKind::Junction(inter.id),
                            first: ida,
                            second: idb,
                        });
                        involved.extend([ida, idb]);
                    }
                }
            }
        }
    }
    events
}
