//! Helpers shared by integration tests: random simulator states and a naive
//! re-derivation of chains and observations.
#![allow(dead_code)]

use mixflow_core::network::{Endpoint, Heading, LaneId, NetworkSpec, Topology};
use mixflow_core::sim::{Action, AvActions, ScenarioConfig, SimState, VehicleClass, VehicleView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random scenario on a grid of at most 3x3.
pub fn random_config(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let topology = if rng.random_bool(0.5) {
        Topology::TwoWay
    } else {
        Topology::FourWay
    };
    let spec = NetworkSpec::new(topology, rng.random_range(1..=3), rng.random_range(1..=3));
    let f = [400.0, 550.0, 700.0, 850.0, 1000.0];
    let p = [0.1, 1.0 / 3.0, 0.5, 1.0];
    let mut c = ScenarioConfig::new(
        spec,
        f[rng.random_range(0..5)],
        f[rng.random_range(0..5)],
        p[rng.random_range(0..4)],
    );
    c.warmup_steps = rng.random_range(0..150);
    c.seed = rng.random();
    c
}

pub fn random_actions(state: &SimState, rng: &mut ChaCha8Rng) -> AvActions {
    state
        .controllable_avs()
        .into_iter()
        .map(|id| (id, Action::from_index(rng.random_range(0..Action::COUNT)).unwrap()))
        .collect()
}

/// `count` snapshots taken from episodes with random AV actions.
pub fn random_states(count: usize, seed: u64) -> Vec<SimState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut s = SimState::reset(&random_config(&mut rng)).unwrap();
        for _ in 0..10 {
            for _ in 0..rng.random_range(1..60) {
                let a = random_actions(&s, &mut rng);
                s.step(&a).unwrap();
            }
            out.push(s.clone());
            if out.len() == count {
                break;
            }
        }
    }
    out
}

/// Vehicles whose front is on `lane`.
pub fn on_lane(state: &SimState, lane: LaneId) -> Vec<VehicleView> {
    let entry = state.network().lane(lane).upstream == Endpoint::Border;
    state
        .vehicles()
        .filter(|v| v.lane == lane && (v.lane_pos > 0.0 || (entry && v.lane_pos >= 0.0)))
        .collect()
}

/// Naive chain split of the vehicles on one lane: the half-chain holds the
/// IDM vehicles ahead of every AV; an AV's chain holds it and the vehicles
/// behind it up to the next AV. Both nearest to the stop line first.
pub fn naive_chains(lane: &[VehicleView]) -> (Vec<VehicleView>, Vec<Vec<VehicleView>>) {
    let by_nearest =
        |xs: &mut Vec<VehicleView>| xs.sort_by(|a, b| b.lane_pos.total_cmp(&a.lane_pos).then(a.id.cmp(&b.id)));
    let avs: Vec<&VehicleView> = lane.iter().filter(|v| v.class == VehicleClass::Av).collect();
    let mut half: Vec<VehicleView> = lane
        .iter()
        .filter(|v| avs.iter().all(|a| v.lane_pos > a.lane_pos))
        .copied()
        .collect();
    by_nearest(&mut half);
    let mut chains = Vec::new();
    let mut heads: Vec<VehicleView> = avs.iter().map(|v| **v).collect();
    by_nearest(&mut heads);
    for head in heads {
        let mut chain: Vec<VehicleView> = lane
            .iter()
            .filter(|v| {
                v.lane_pos <= head.lane_pos
                    && (v.id == head.id || v.class == VehicleClass::Idm)
                    && !avs
                        .iter()
                        .any(|a| a.id != head.id && a.lane_pos <= head.lane_pos && a.lane_pos >= v.lane_pos)
            })
            .copied()
            .collect();
        by_nearest(&mut chain);
        chains.push(chain);
    }
    (half, chains)
}

fn feat(state: &SimState, v: Option<&VehicleView>) -> [f64; 2] {
    let net = state.network();
    match v {
        None => [0.0, 1.0],
        Some(v) => [
            (v.speed / net.speed_limit()).clamp(0.0, 1.0),
            ((net.lane_length() - v.lane_pos) / net.lane_length()).clamp(0.0, 1.0),
        ],
    }
}

/// Clockwise order around an intersection seen from above.
const CLOCKWISE: [Heading; 4] = [
    Heading::Eastbound,
    Heading::Southbound,
    Heading::Westbound,
    Heading::Northbound,
];

/// Observation of `ego` re-derived from vehicle views only.
pub fn naive_observe(state: &SimState, ego: &VehicleView) -> [f64; 22] {
    let net = state.network();
    let Endpoint::Intersection(inter) = net.lane(ego.lane).downstream else {
        panic!("ego has no intersection ahead");
    };
    let inter = net.intersection(inter);
    let mut slots: Vec<[f64; 2]> = Vec::new();

    let (_, chains) = naive_chains(&on_lane(state, ego.lane));
    let own = chains.iter().find(|c| c[0].id == ego.id).expect("ego heads a chain");
    slots.push(feat(state, Some(&own[0])));
    slots.push(feat(state, own.last()));

    let at = CLOCKWISE.iter().position(|&h| h == ego.heading).unwrap();
    for k in 1..4 {
        let heading = CLOCKWISE[(at + k) % 4];
        match inter.approach(heading) {
            None => slots.extend([[0.0, 1.0]; 3]),
            Some(lane) => {
                let (half, chains) = naive_chains(&on_lane(state, lane));
                slots.push(feat(state, half.last()));
                let first = chains.first();
                slots.push(feat(state, first.map(|c| &c[0])));
                slots.push(feat(state, first.and_then(|c| c.last())));
            }
        }
    }
    let mut out = [0.0; 22];
    for (i, s) in slots.iter().enumerate() {
        out[2 * i] = s[0];
        out[2 * i + 1] = s[1];
    }
    out
}

/// Compares `decompose` and `observe` with the naive versions on one state;
/// returns the number of observations checked.
pub fn check_against_naive(state: &SimState) -> usize {
    use mixflow_core::obs::{decompose, observe};
    let net = state.network();
    for lane in net.lanes() {
        let Endpoint::Intersection(_) = lane.downstream else {
            continue;
        };
        let fast = decompose(state.approach_vehicles(lane.route, lane.index_in_route), |v| v.class);
        let (half, chains) = naive_chains(&on_lane(state, lane.id));
        let ids = |xs: &[VehicleView]| xs.iter().map(|v| v.id).collect::<Vec<_>>();
        assert_eq!(fast.half_chain.iter().map(|v| v.id).collect::<Vec<_>>(), ids(&half));
        assert_eq!(fast.chains.len(), chains.len());
        for (f, n) in fast.chains.iter().zip(&chains) {
            let mut got = vec![f.head.id];
            got.extend(f.followers.iter().map(|v| v.id));
            assert_eq!(got, ids(n));
        }
    }
    let mut checked = 0;
    for id in state.controllable_avs() {
        let view = state.vehicles().find(|v| v.id == id).unwrap();
        let fast = observe(state, id).unwrap();
        assert_eq!(fast.0, naive_observe(state, &view), "vehicle {id:?}");
        checked += 1;
    }
    checked
}
