//! The simulation engine.
//!
//! Vehicles never change routes, so every route is simulated as a single
//! ordered queue (most downstream vehicle first) and a vehicle's position is
//! the distance of its front bumper from the route's entry. The lane a
//! vehicle is on follows from that position: with segments of length `L`,
//! junction `k` of a route sits at route distance `(k + 1) * L`.
//!
//! One call to [`SimState::step`] runs the fixed pipeline:
//!
//! 1. signal phases and junction right-of-way decisions,
//! 2. accelerations (policy actions for controllable AVs, IDM otherwise),
//! 3. ballistic integration,
//! 4. exits at the network border,
//! 5. collision detection and removal,
//! 6. inflow insertion,
//! 7. clock advance.

mod collision;
mod eval;
mod inflow;
mod junction;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::baselines::{self, PhaseState, SignalPlan};
use crate::dynamics::{self, AvLimits, IdmParams, LeaderGap};
use crate::network::{build_grid, Axis, Heading, IntersectionId, LaneId, Network, NetworkSpec, RouteId};
use crate::{Error, Result};

pub use collision::{detect_collisions, occupancy_interval, CollisionEvent, CollisionKind};
pub use eval::{evaluate, evaluate_seed, EpisodeOutcome, EvalSummary, EvalWindow};
pub use inflow::is_av_arrival;
pub(crate) use junction::stop_targets;
pub use junction::{arrival_time, yield_rule};

/// The 16 studied inflow configurations `(f_h, f_v)` (veh/hr/lane).
pub const INFLOW_CONFIGS: [(f64, f64); 16] = [
    (1000.0, 400.0),
    (1000.0, 550.0),
    (1000.0, 700.0),
    (1000.0, 850.0),
    (850.0, 400.0),
    (850.0, 550.0),
    (850.0, 700.0),
    (850.0, 850.0),
    (850.0, 1000.0),
    (700.0, 700.0),
    (700.0, 850.0),
    (700.0, 1000.0),
    (550.0, 850.0),
    (550.0, 1000.0),
    (400.0, 850.0),
    (400.0, 1000.0),
];

/// Length of every vehicle (m).
pub const VEHICLE_LENGTH: f64 = 5.0;
/// Stop lines sit this far before the end of the approach lane (m).
pub const STOP_LINE_SETBACK: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleClass {
    Av,
    Idm,
}

impl VehicleClass {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Av => "av",
            VehicleClass::Idm => "idm",
        }
    }
}

/// Discrete AV action: accelerate, hold speed or brake.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Accelerate = 0,
    Hold = 1,
    Decelerate = 2,
}

impl Action {
    pub const COUNT: usize = 3;

    pub fn from_index(index: usize) -> Option<Action> {
        match index {
            0 => Some(Action::Accelerate),
            1 => Some(Action::Hold),
            2 => Some(Action::Decelerate),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn accel(self, limits: &AvLimits) -> f64 {
        match self {
            Action::Accelerate => limits.c_accel,
            Action::Hold => 0.0,
            Action::Decelerate => -limits.c_decel,
        }
    }
}

/// Actions for the controllable AVs of one step.
pub type AvActions = BTreeMap<VehicleId, Action>;

/// How intersections are regulated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum IntersectionControl {
    /// Unsignalized: AVs are controlled externally, IDM vehicles use gap
    /// acceptance.
    None,
    /// Fixed-time signals shared by every intersection.
    Signal(SignalPlan),
    /// Adaptive MaxPressure signals with a minimum phase duration.
    MaxPressure { tau_min_s: f64 },
    /// Stop signs on the axis without priority.
    Priority { axis: Axis },
}

/// Everything needed to reproduce an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub network: NetworkSpec,
    /// Inflow per horizontal lane (veh/hr/lane).
    pub f_h: f64,
    /// Inflow per vertical lane (veh/hr/lane).
    pub f_v: f64,
    /// Fraction of arrivals that are AVs, in (0, 1].
    pub penetration: f64,
    #[serde(default = "default_delta_t")]
    pub delta_t: f64,
    #[serde(default = "default_warmup")]
    pub warmup_steps: u64,
    /// Measured steps per evaluation episode.
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub idm: IdmParams,
    #[serde(default)]
    pub av_limits: AvLimits,
    /// Gap-acceptance time at unsignalized and priority junctions (s).
    #[serde(default = "default_t_gap")]
    pub t_gap: f64,
    #[serde(default = "default_control")]
    pub control: IntersectionControl,
}

fn default_delta_t() -> f64 {
    0.5
}

fn default_warmup() -> u64 {
    100
}

fn default_horizon() -> u64 {
    2000
}

fn default_t_gap() -> f64 {
    3.0
}

fn default_control() -> IntersectionControl {
    IntersectionControl::None
}

impl ScenarioConfig {
    pub fn new(network: NetworkSpec, f_h: f64, f_v: f64, penetration: f64) -> Self {
        ScenarioConfig {
            network,
            f_h,
            f_v,
            penetration,
            delta_t: default_delta_t(),
            warmup_steps: default_warmup(),
            horizon: default_horizon(),
            seed: 0,
            idm: IdmParams::default(),
            av_limits: AvLimits::default(),
            t_gap: default_t_gap(),
            control: IntersectionControl::None,
        }
    }

    pub fn with_control(mut self, control: IntersectionControl) -> Self {
        self.control = control;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        self.network.validate()?;
        if !(self.f_h >= 0.0 && self.f_v >= 0.0) || !self.f_h.is_finite() || !self.f_v.is_finite() {
            return bad("inflow rates must be finite and non-negative");
        }
        if !(self.penetration > 0.0 && self.penetration <= 1.0) {
            return bad("penetration must be in (0, 1]");
        }
        if !self.delta_t.is_finite() || self.delta_t <= 0.0 {
            return bad("delta_t must be positive");
        }
        if !self.t_gap.is_finite() || self.t_gap < 0.0 {
            return bad("t_gap must be non-negative");
        }
        self.idm.validate().map_err(|m| Error::InvalidConfig(m.into()))?;
        self.av_limits
            .validate(&self.idm)
            .map_err(|m| Error::InvalidConfig(m.into()))?;
        match self.control {
            IntersectionControl::Signal(plan) => plan
                .validate(self.delta_t)
                .map_err(|m| Error::InvalidConfig(m.into()))?,
            IntersectionControl::MaxPressure { tau_min_s } if tau_min_s.is_nan() || tau_min_s < 0.0 => {
                return Err(Error::InvalidConfig(format!("invalid tau_min {tau_min_s}")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Inflow rate of an entry lane with the given heading.
    pub fn inflow_for(&self, heading: Heading) -> f64 {
        match heading.axis() {
            Axis::Horizontal => self.f_h,
            Axis::Vertical => self.f_v,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub route: RouteId,
    /// Front bumper, measured from the route entry (m).
    pub pos: f64,
    /// Front bumper at the start of the last step.
    pub prev_pos: f64,
    pub speed: f64,
    pub length: f64,
    /// Exact (sub-step) time at which the vehicle entered the network (s).
    pub entry_time: f64,
    /// Right of way granted at the next junction.
    pub granted: bool,
    /// Stopping for the next junction in the previous step.
    pub yielding: bool,
    /// Route position of the stop line to honour this step.
    pub stop_line: Option<f64>,
}

impl Vehicle {
    pub fn rear(&self) -> f64 {
        self.pos - self.length
    }
}

/// Per-step counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub outflow: u32,
    pub collisions: u32,
    pub dropped_inflows: u32,
    pub vehicle_count: u32,
}

/// Cumulative vehicle accounting since reset (warmup included).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Totals {
    pub entered: u64,
    pub exited: u64,
    pub collision_removed: u64,
    pub collisions: u64,
    pub dropped: u64,
}

/// Read-only view of one vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleView {
    pub id: VehicleId,
    pub class: VehicleClass,
    pub route: RouteId,
    pub heading: Heading,
    pub lane: LaneId,
    /// Front bumper measured from the start of `lane`.
    pub lane_pos: f64,
    /// Front bumper measured from the route entry.
    pub route_pos: f64,
    pub speed: f64,
}

/// Complete mutable world state.
#[derive(Clone, Debug)]
pub struct SimState {
    net: Arc<Network>,
    config: ScenarioConfig,
    routes: Vec<VecDeque<Vehicle>>,
    inflows: Vec<inflow::InflowClock>,
    phases: Vec<PhaseState>,
    elapsed_steps: u64,
    warmup_done: bool,
    av_control: bool,
    rng: ChaCha8Rng,
    next_id: u64,
    totals: Totals,
    noise: Option<Normal<f64>>,
}

impl SimState {
    /// Builds the network, then simulates the warmup with every vehicle
    /// (AVs included) driven by IDM. AV control is enabled afterwards iff the
    /// intersections are unsignalized.
    pub fn reset(config: &ScenarioConfig) -> Result<SimState> {
        config.validate()?;
        let net = Arc::new(build_grid(&config.network)?);
        Self::reset_on(net, config)
    }

    /// Like [`SimState::reset`] but reuses an already built network.
    pub fn reset_on(net: Arc<Network>, config: &ScenarioConfig) -> Result<SimState> {
        config.validate()?;
        if net.spec() != &config.network {
            return Err(Error::InvalidConfig("network does not match scenario".into()));
        }
        let inflows = net
            .routes()
            .iter()
            .map(|r| inflow::InflowClock::new(config.inflow_for(r.heading)))
            .collect();
        let noise =
            (config.idm.noise_sigma > 0.0).then(|| Normal::new(0.0, config.idm.noise_sigma).expect("validated sigma"));
        let mut state = SimState {
            routes: alloc::vec![VecDeque::new(); net.routes().len()],
            phases: alloc::vec![PhaseState::default(); net.intersections().len()],
            inflows,
            net,
            config: config.clone(),
            elapsed_steps: 0,
            warmup_done: false,
            av_control: false,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            next_id: 0,
            totals: Totals::default(),
            noise,
        };
        let empty = AvActions::new();
        for _ in 0..config.warmup_steps {
            state.step(&empty)?;
        }
        state.warmup_done = true;
        state.av_control = config.control == IntersectionControl::None;
        Ok(state)
    }

    /// Drive AVs with IDM (`false`) or with external actions (`true`).
    /// External control is only possible at unsignalized intersections.
    pub fn set_av_control(&mut self, enabled: bool) {
        self.av_control = enabled && self.config.control == IntersectionControl::None;
    }

    pub fn av_control(&self) -> bool {
        self.av_control && self.warmup_done
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_arc(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    /// Steps since the end of warmup.
    pub fn clock(&self) -> u64 {
        self.elapsed_steps.saturating_sub(self.config.warmup_steps)
    }

    /// Simulated time since reset, warmup included (s).
    pub fn time_s(&self) -> f64 {
        self.elapsed_steps as f64 * self.config.delta_t
    }

    pub fn totals(&self) -> Totals {
        self.totals
    }

    pub fn vehicle_count(&self) -> usize {
        self.routes.iter().map(VecDeque::len).sum()
    }

    pub fn phases(&self) -> &[PhaseState] {
        &self.phases
    }

    pub fn route_queue(&self, route: RouteId) -> &VecDeque<Vehicle> {
        &self.routes[route.0]
    }

    /// Route distance of junction `k` on any route.
    pub fn boundary(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.net.lane_length()
    }

    pub fn route_length(&self, route: RouteId) -> f64 {
        self.net.route(route).lanes.len() as f64 * self.net.lane_length()
    }

    /// Index within its route of the lane holding a front bumper at `pos`.
    /// A front exactly at a lane end still belongs to that lane.
    pub fn lane_index(&self, pos: f64) -> usize {
        let l = self.net.lane_length();
        if pos <= 0.0 {
            0
        } else {
            (libm::ceil(pos / l) as usize).saturating_sub(1)
        }
    }

    pub fn view(&self, v: &Vehicle) -> VehicleView {
        let route = self.net.route(v.route);
        let k = self.lane_index(v.pos).min(route.lanes.len() - 1);
        VehicleView {
            id: v.id,
            class: v.class,
            route: v.route,
            heading: route.heading,
            lane: route.lanes[k],
            lane_pos: v.pos - k as f64 * self.net.lane_length(),
            route_pos: v.pos,
            speed: v.speed,
        }
    }

    /// All vehicles, route by route, most downstream first.
    pub fn vehicles(&self) -> impl Iterator<Item = VehicleView> + '_ {
        self.routes.iter().flatten().map(move |v| self.view(v))
    }

    pub fn find(&self, id: VehicleId) -> Option<&Vehicle> {
        self.routes.iter().flatten().find(|v| v.id == id)
    }

    /// Whether `v` is an AV taking external actions this step.
    pub fn is_controllable(&self, v: &Vehicle) -> bool {
        v.class == VehicleClass::Av
            && self.av_control()
            && self.lane_index(v.pos) < self.net.route(v.route).junctions.len()
    }

    /// Controllable AVs in deterministic (route, queue) order.
    pub fn controllable_avs(&self) -> Vec<VehicleId> {
        self.routes
            .iter()
            .flatten()
            .filter(|v| self.is_controllable(v))
            .map(|v| v.id)
            .collect()
    }

    /// Vehicles whose front is on the approach lane of junction `k` of
    /// `route`, nearest to the intersection first.
    pub fn approach_vehicles(&self, route: RouteId, k: usize) -> impl Iterator<Item = &Vehicle> + '_ {
        let end = self.boundary(k);
        let start = end - self.net.lane_length();
        self.routes[route.0]
            .iter()
            .skip_while(move |v| v.pos > end)
            .take_while(move |v| v.pos > start || (k == 0 && v.pos >= 0.0))
    }

    /// Vehicles whose front is on the lane leaving junction `k` of `route`.
    pub fn exit_vehicles(&self, route: RouteId, k: usize) -> impl Iterator<Item = &Vehicle> + '_ {
        let start = self.boundary(k);
        let end = start + self.net.lane_length();
        self.routes[route.0]
            .iter()
            .skip_while(move |v| v.pos > end)
            .take_while(move |v| v.pos > start)
    }

    /// Advances the world by one step.
    pub fn step(&mut self, actions: &AvActions) -> Result<StepMetrics> {
        if self.av_control() {
            for v in self.routes.iter().flatten() {
                if self.is_controllable(v) && !actions.contains_key(&v.id) {
                    return Err(Error::MissingAction(v.id));
                }
            }
        }

        self.update_signals();
        junction::plan(self);

        let accels = self.accelerations(actions);
        self.integrate(&accels);
        let outflow = self.remove_exited();

        let events = detect_collisions(self);
        self.remove_collided(&events);

        let dropped = inflow::spawn_inflows(self);
        self.elapsed_steps += 1;
        for phase in &mut self.phases {
            phase.time_in_phase_s += self.config.delta_t;
        }

        Ok(StepMetrics {
            outflow,
            collisions: events.len() as u32,
            dropped_inflows: dropped,
            vehicle_count: self.vehicle_count() as u32,
        })
    }

    fn update_signals(&mut self) {
        let time = self.time_s();
        match self.config.control {
            IntersectionControl::Signal(plan) => {
                let green = baselines::fixed_signal(&plan, time);
                for phase in &mut self.phases {
                    phase.set(green);
                }
            }
            IntersectionControl::MaxPressure { tau_min_s } => {
                let decisions = baselines::max_pressure(self, tau_min_s);
                for (phase, green) in self.phases.iter_mut().zip(decisions) {
                    phase.set(green);
                }
            }
            IntersectionControl::None | IntersectionControl::Priority { .. } => {}
        }
    }

    fn accelerations(&mut self, actions: &AvActions) -> Vec<Vec<f64>> {
        let idm = self.config.idm;
        let limits = self.config.av_limits;
        let mut out = Vec::with_capacity(self.routes.len());
        for r in 0..self.routes.len() {
            let mut accels = Vec::with_capacity(self.routes[r].len());
            for i in 0..self.routes[r].len() {
                let queue = &self.routes[r];
                let v = &queue[i];
                let leader = (i > 0).then(|| {
                    let lead = &queue[i - 1];
                    LeaderGap {
                        v_lead: lead.speed,
                        gap: (lead.rear() - v.pos).max(1e-3),
                    }
                });
                if self.is_controllable(v) {
                    let mut a = actions[&v.id].accel(&limits);
                    if let Some(l) = leader {
                        a = a.min(dynamics::clamp_idm(following_cap(v.speed, l, &idm), &idm));
                    }
                    accels.push(a);
                    continue;
                }
                let mut a = dynamics::idm_raw(v.speed, leader, &idm);
                if let Some(line) = v.stop_line {
                    let gap = (line - v.pos).max(0.05);
                    a = a.min(dynamics::idm_raw(v.speed, Some(LeaderGap { v_lead: 0.0, gap }), &idm));
                }
                let noise = match &self.noise {
                    Some(n) => n.sample(&mut self.rng),
                    None => 0.0,
                };
                accels.push(dynamics::clamp_idm(a + noise, &idm));
            }
            out.push(accels);
        }
        out
    }

    fn integrate(&mut self, accels: &[Vec<f64>]) {
        let dt = self.config.delta_t;
        let v_max = self.net.speed_limit();
        let l = self.net.lane_length();
        for (queue, accels) in self.routes.iter_mut().zip(accels) {
            for (v, &a) in queue.iter_mut().zip(accels) {
                let before = lane_of(v.pos, l);
                v.prev_pos = v.pos;
                (v.pos, v.speed) = dynamics::ballistic_step(v.pos, v.speed, a, dt, v_max);
                if lane_of(v.pos, l) != before {
                    v.granted = false;
                    v.yielding = false;
                }
            }
        }
    }

    fn remove_exited(&mut self) -> u32 {
        let mut outflow = 0;
        for r in 0..self.routes.len() {
            let end = self.route_length(RouteId(r));
            while self.routes[r].front().is_some_and(|v| v.pos > end) {
                self.routes[r].pop_front();
                outflow += 1;
            }
        }
        self.totals.exited += u64::from(outflow);
        outflow
    }

    fn remove_collided(&mut self, events: &[CollisionEvent]) {
        if events.is_empty() {
            return;
        }
        let doomed: Vec<VehicleId> = events.iter().flat_map(|e| [e.first, e.second]).collect();
        for queue in &mut self.routes {
            queue.retain(|v| !doomed.contains(&v.id));
        }
        self.totals.collisions += events.len() as u64;
        self.totals.collision_removed += doomed.len() as u64;
    }

    pub(crate) fn next_vehicle_id(&mut self) -> VehicleId {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Places a vehicle directly (tests and scripted scenarios). The vehicle
    /// is inserted into its route queue in position order and counted as
    /// entered.
    pub fn place_vehicle(&mut self, route: RouteId, class: VehicleClass, pos: f64, speed: f64) -> VehicleId {
        let id = self.next_vehicle_id();
        let vehicle = Vehicle {
            id,
            class,
            route,
            pos,
            prev_pos: pos,
            speed,
            length: VEHICLE_LENGTH,
            entry_time: self.time_s(),
            granted: false,
            yielding: false,
            stop_line: None,
        };
        let queue = &mut self.routes[route.0];
        let at = queue.iter().position(|v| v.pos < pos).unwrap_or(queue.len());
        queue.insert(at, vehicle);
        self.totals.entered += 1;
        id
    }

    /// Replaces the inflow rates (used by scripted tests to silence inflows).
    pub fn set_inflows(&mut self, f_h: f64, f_v: f64) {
        self.config.f_h = f_h;
        self.config.f_v = f_v;
        let now = self.time_s();
        for (clock, route) in self.inflows.iter_mut().zip(self.net.routes()) {
            *clock = inflow::InflowClock::new(self.config.inflow_for(route.heading));
            clock.next_due_s += now;
        }
    }

    pub fn inflow_clocks(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.inflows.iter().map(|c| (c.headway_s, c.arrivals))
    }

    /// Green axis of an intersection under signal control.
    pub fn green_axis(&self, intersection: IntersectionId) -> Axis {
        self.phases[intersection.0].green
    }
}

fn lane_of(pos: f64, lane_length: f64) -> usize {
    if pos <= 0.0 {
        0
    } else {
        (libm::ceil(pos / lane_length) as usize).saturating_sub(1)
    }
}

/// Car-following bound applied to AV commands: the interaction term of IDM
/// without the free-road term, so it only binds when a leader is close.
pub fn following_cap(v: f64, leader: LeaderGap, idm: &IdmParams) -> f64 {
    let free_at_rest = dynamics::idm_raw(0.0, None, idm);
    let with_leader = dynamics::idm_raw(v, Some(leader), idm) - dynamics::idm_raw(v, None, idm);
    free_at_rest + with_leader
}

#[cfg(test)]
mod tests;
