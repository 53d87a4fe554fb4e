//! Per-AV observations built from chains.
//!
//! The vehicles of an approach lane, nearest to the intersection first, are
//! split into a leading half-chain (IDM vehicles ahead of the first AV) and
//! chains, each headed by an AV and followed by the IDM vehicles up to the
//! next AV.
//!
//! An observation holds 11 (speed, distance) pairs, normalized by the speed
//! limit and the lane length:
//!
//! ```text
//! [ego head, ego tail,
//!  lane 1: half-chain tail, chain head, chain tail,
//!  lane 2: ...,
//!  lane 3: ...]
//! ```
//!
//! Lanes 1 to 3 are the other approaches of the ego's next intersection,
//! clockwise from the ego lane. Missing vehicles and missing approaches are
//! padded with a stopped vehicle at the far end of the lane, `(0, 1)`.

use alloc::vec::Vec;

use crate::network::Heading;
use crate::sim::{SimState, Vehicle, VehicleClass, VehicleId};
use crate::{Error, Result};

pub const OBS_SLOTS: usize = 11;
pub const OBS_DIM: usize = 2 * OBS_SLOTS;
/// Normalized padding of an empty slot.
pub const PADDING: [f64; 2] = [0.0, 1.0];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain<T> {
    pub head: T,
    pub followers: Vec<T>,
}

impl<T> Chain<T> {
    pub fn tail(&self) -> &T {
        self.followers.last().unwrap_or(&self.head)
    }

    pub fn len(&self) -> usize {
        1 + self.followers.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainDecomposition<T> {
    pub half_chain: Vec<T>,
    pub chains: Vec<Chain<T>>,
}

impl<T> ChainDecomposition<T> {
    /// Half-chain followed by every chain, in input order.
    pub fn flatten(self) -> Vec<T> {
        let mut out = self.half_chain;
        for c in self.chains {
            out.push(c.head);
            out.extend(c.followers);
        }
        out
    }
}

/// Splits lane vehicles (nearest to the intersection first) into the leading
/// half-chain and AV-headed chains.
pub fn decompose<T, I, F>(vehicles: I, class_of: F) -> ChainDecomposition<T>
where
    I: IntoIterator<Item = T>,
    F: Fn(&T) -> VehicleClass,
{
    let mut half_chain = Vec::new();
    let mut chains: Vec<Chain<T>> = Vec::new();
    for v in vehicles {
        match (class_of(&v), chains.last_mut()) {
            (VehicleClass::Av, _) => chains.push(Chain {
                head: v,
                followers: Vec::new(),
            }),
            (VehicleClass::Idm, Some(chain)) => chain.followers.push(v),
            (VehicleClass::Idm, None) => half_chain.push(v),
        }
    }
    ChainDecomposition { half_chain, chains }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Normalized (speed, distance) of slot `i`.
    pub fn slot(&self, i: usize) -> [f64; 2] {
        [self.0[2 * i], self.0[2 * i + 1]]
    }
}

fn features(state: &SimState, v: &Vehicle, boundary: f64) -> [f64; 2] {
    let net = state.network();
    [
        (v.speed / net.speed_limit()).clamp(0.0, 1.0),
        ((boundary - v.pos) / net.lane_length()).clamp(0.0, 1.0),
    ]
}

/// Observation of the controllable AV `av`.
pub fn observe(state: &SimState, av: VehicleId) -> Result<Observation> {
    let ego = state.find(av).ok_or(Error::NotControllable(av))?;
    if !state.is_controllable(ego) {
        return Err(Error::NotControllable(av));
    }
    let net = state.network();
    let route = net.route(ego.route);
    let k = state.lane_index(ego.pos);
    let inter = net.intersection(route.junctions[k]);
    let boundary = state.boundary(k);

    let mut out = [0.0; OBS_DIM];
    let mut put = |slot: usize, f: [f64; 2]| {
        out[2 * slot] = f[0];
        out[2 * slot + 1] = f[1];
    };

    let own = decompose(state.approach_vehicles(ego.route, k), |v| v.class);
    let chain = own
        .chains
        .iter()
        .find(|c| c.head.id == av)
        .expect("a controllable AV heads its own chain");
    put(0, features(state, chain.head, boundary));
    put(1, features(state, chain.tail(), boundary));

    let base = route.heading.clockwise_slot();
    for lane in 1..4 {
        let heading = Heading::from_clockwise_slot(base + lane);
        let first = 2 + 3 * (lane - 1);
        let Some((r, j)) = net.route_through(inter.id, heading) else {
            for s in first..first + 3 {
                put(s, PADDING);
            }
            continue;
        };
        let b = state.boundary(j);
        let d = decompose(state.approach_vehicles(r, j), |v| v.class);
        put(first, d.half_chain.last().map_or(PADDING, |v| features(state, v, b)));
        match d.chains.first() {
            Some(c) => {
                put(first + 1, features(state, c.head, b));
                put(first + 2, features(state, c.tail(), b));
            }
            None => {
                put(first + 1, PADDING);
                put(first + 2, PADDING);
            }
        }
    }
    Ok(Observation(out))
}

/// Observations of every controllable AV, in [`SimState::controllable_avs`]
/// order.
pub fn observe_all(state: &SimState) -> Result<Vec<(VehicleId, Observation)>> {
    state
        .controllable_avs()
        .into_iter()
        .map(|id| observe(state, id).map(|o| (id, o)))
        .collect()
}
