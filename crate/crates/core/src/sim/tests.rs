use super::*;
use crate::network::Topology;

fn quiet(topology: Topology, rows: usize, cols: usize) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(NetworkSpec::new(topology, rows, cols), 0.0, 0.0, 1.0 / 3.0);
    c.warmup_steps = 0;
    c
}

fn hold_all(state: &SimState) -> AvActions {
    state
        .controllable_avs()
        .into_iter()
        .map(|id| (id, Action::Hold))
        .collect()
}

fn assert_no_overlap(state: &SimState) {
    for r in 0..state.network().routes().len() {
        let q = state.route_queue(RouteId(r));
        for pair in q.iter().collect::<Vec<_>>().windows(2) {
            assert!(pair[1].pos <= pair[0].rear(), "overlap on route {r}");
        }
    }
}

#[test]
fn empty_step_is_all_zero() {
    let mut s = SimState::reset(&quiet(Topology::TwoWay, 2, 1)).unwrap();
    assert_eq!(s.step(&AvActions::new()).unwrap(), StepMetrics::default());
}

#[test]
fn vehicle_at_the_border_exits() {
    let mut s = SimState::reset(&quiet(Topology::TwoWay, 1, 1)).unwrap();
    let end = s.route_length(RouteId(0));
    s.place_vehicle(RouteId(0), VehicleClass::Idm, end - 1.0, 13.0);
    let m = s.step(&AvActions::new()).unwrap();
    assert_eq!(m.outflow, 1);
    assert_eq!(m.vehicle_count, 0);
}

#[test]
fn crossing_avs_collide_at_the_junction() {
    let mut s = SimState::reset(&quiet(Topology::TwoWay, 1, 1)).unwrap();
    // Route 0 is eastbound, route 1 northbound; both fronts reach 102 m.
    s.place_vehicle(RouteId(0), VehicleClass::Av, 97.0, 10.0);
    s.place_vehicle(RouteId(1), VehicleClass::Av, 97.0, 10.0);
    let actions = hold_all(&s);
    assert_eq!(actions.len(), 2);
    let m = s.step(&actions).unwrap();
    assert_eq!(m.collisions, 1);
    assert_eq!(m.vehicle_count, 0);
    assert_eq!(s.totals().collision_removed, 2);
}

#[test]
fn missing_action_is_an_error() {
    let mut s = SimState::reset(&quiet(Topology::TwoWay, 1, 1)).unwrap();
    let id = s.place_vehicle(RouteId(0), VehicleClass::Av, 50.0, 10.0);
    assert_eq!(s.step(&AvActions::new()), Err(Error::MissingAction(id)));
}

#[test]
fn in_lane_overlap() {
    let mut s = SimState::reset(&quiet(Topology::TwoWay, 1, 1)).unwrap();
    s.place_vehicle(RouteId(0), VehicleClass::Idm, 54.9, 0.0);
    s.place_vehicle(RouteId(0), VehicleClass::Idm, 50.0, 0.0);
    let events = detect_collisions(&s);
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].kind, CollisionKind::InLane);
}

#[test]
fn perpendicular_straddlers_collide_once() {
    let mut s = SimState::reset(&quiet(Topology::TwoWay, 1, 1)).unwrap();
    s.place_vehicle(RouteId(0), VehicleClass::Idm, 102.0, 0.0);
    s.place_vehicle(RouteId(1), VehicleClass::Idm, 103.0, 0.0);
    let events = detect_collisions(&s);
    assert_eq!(events.len(), 1);
    assert!(matches!(events[0].kind, CollisionKind::Junction(_)));
}

#[test]
fn opposite_headings_never_collide() {
    let mut s = SimState::reset(&quiet(Topology::FourWay, 1, 1)).unwrap();
    let net = s.network_arc().clone();
    assert_eq!(net.route(RouteId(0)).heading, Heading::Eastbound);
    assert_eq!(net.route(RouteId(1)).heading, Heading::Westbound);
    s.place_vehicle(RouteId(0), VehicleClass::Idm, 102.0, 0.0);
    s.place_vehicle(RouteId(1), VehicleClass::Idm, 102.0, 0.0);
    assert!(detect_collisions(&s).is_empty());
}

#[test]
fn warmup_populates_without_overlap() {
    let mut c = ScenarioConfig::new(NetworkSpec::new(Topology::TwoWay, 2, 1), 1000.0, 1000.0, 1.0 / 3.0);
    c.warmup_steps = 100;
    let s = SimState::reset(&c).unwrap();
    assert!(s.vehicle_count() > 0);
    assert_eq!(s.clock(), 0);
    assert_no_overlap(&s);
}

#[test]
fn no_warmup_means_empty_network() {
    let mut c = ScenarioConfig::new(NetworkSpec::new(Topology::TwoWay, 2, 1), 1000.0, 1000.0, 1.0 / 3.0);
    c.warmup_steps = 0;
    let s = SimState::reset(&c).unwrap();
    assert_eq!(s.vehicle_count(), 0);
}

#[test]
fn entry_headway_at_400() {
    let mut c = ScenarioConfig::new(NetworkSpec::new(Topology::TwoWay, 1, 3), 400.0, 0.0, 1.0 / 3.0);
    c.warmup_steps = 0;
    let mut s = SimState::reset(&c).unwrap();
    s.set_av_control(false);
    for _ in 0..60 {
        s.step(&AvActions::new()).unwrap();
    }
    let entries: Vec<f64> = s.route_queue(RouteId(0)).iter().map(|v| v.entry_time).collect();
    assert!(entries.len() >= 3);
    for w in entries.windows(2) {
        assert_eq!(w[1] - w[0], 9.0);
    }
}

#[test]
fn red_light_stop_line() {
    let c = quiet(Topology::TwoWay, 1, 1).with_control(IntersectionControl::Signal(SignalPlan::equal(25.0)));
    let mut s = SimState::reset(&c).unwrap();
    // Horizontal is green at t = 0, so the northbound leader faces red.
    let id = s.place_vehicle(RouteId(1), VehicleClass::Idm, 40.0, 10.0);
    let v = s.find(id).unwrap().clone();
    assert_eq!(yield_rule(&s, &v), Some(59.0));
}

#[test]
fn priority_axis_never_yields() {
    let c = quiet(Topology::TwoWay, 1, 1).with_control(IntersectionControl::Priority { axis: Axis::Vertical });
    let mut s = SimState::reset(&c).unwrap();
    let north = s.place_vehicle(RouteId(1), VehicleClass::Idm, 90.0, 10.0);
    // An eastbound vehicle already inside the junction.
    s.place_vehicle(RouteId(0), VehicleClass::Idm, 102.0, 2.0);
    let v = s.find(north).unwrap().clone();
    assert_eq!(yield_rule(&s, &v), None);
}

#[test]
fn minor_axis_stops_for_close_priority_arrival() {
    let c = quiet(Topology::TwoWay, 1, 1).with_control(IntersectionControl::Priority { axis: Axis::Vertical });
    let mut s = SimState::reset(&c).unwrap();
    s.place_vehicle(RouteId(1), VehicleClass::Idm, 90.0, 10.0);
    let east = s.place_vehicle(RouteId(0), VehicleClass::Idm, 60.0, 10.0);
    let v = s.find(east).unwrap().clone();
    assert_eq!(yield_rule(&s, &v), Some(39.0));
}

#[test]
fn minor_axis_flows_without_priority_traffic() {
    let c = quiet(Topology::TwoWay, 1, 1).with_control(IntersectionControl::Priority { axis: Axis::Vertical });
    let mut s = SimState::reset(&c).unwrap();
    let east = s.place_vehicle(RouteId(0), VehicleClass::Idm, 60.0, 10.0);
    let v = s.find(east).unwrap().clone();
    assert_eq!(yield_rule(&s, &v), None);
}

#[test]
fn unsignalized_leader_yields_to_earlier_conflict() {
    let mut c = quiet(Topology::TwoWay, 1, 1);
    c.t_gap = 2.0;
    let mut s = SimState::reset(&c).unwrap();
    s.set_av_control(false);
    // Northbound leader 10 m from the junction at 10 m/s arrives in under 1 s.
    let north = s.place_vehicle(RouteId(1), VehicleClass::Idm, 90.0, 10.0);
    let east = s.place_vehicle(RouteId(0), VehicleClass::Idm, 80.0, 10.0);
    let n = s.find(north).unwrap().clone();
    let e = s.find(east).unwrap().clone();
    assert!(arrival_time(&s, &n) < 1.0);
    assert!(arrival_time(&s, &e) - arrival_time(&s, &n) < 2.0);
    assert_eq!(yield_rule(&s, &n), None);
    assert_eq!(yield_rule(&s, &e), Some(19.0));
}

#[test]
fn tie_goes_to_the_vertical_approach() {
    let mut s = SimState::reset(&quiet(Topology::TwoWay, 1, 1)).unwrap();
    s.set_av_control(false);
    let north = s.place_vehicle(RouteId(1), VehicleClass::Idm, 60.0, 10.0);
    let east = s.place_vehicle(RouteId(0), VehicleClass::Idm, 60.0, 10.0);
    let n = s.find(north).unwrap().clone();
    let e = s.find(east).unwrap().clone();
    assert_eq!(yield_rule(&s, &n), None);
    assert!(yield_rule(&s, &e).is_some());
}

fn run_checked(config: &ScenarioConfig, steps: usize) -> (Vec<StepMetrics>, Vec<VehicleView>) {
    let mut s = SimState::reset(config).unwrap();
    let mut out = Vec::new();
    for _ in 0..steps {
        let actions = hold_all(&s);
        out.push(s.step(&actions).unwrap());
        let t = s.totals();
        assert_eq!(t.entered, t.exited + t.collision_removed + s.vehicle_count() as u64);
    }
    (out, s.vehicles().collect())
}

#[test]
fn conservation_and_determinism() {
    let mut c = ScenarioConfig::new(NetworkSpec::new(Topology::FourWay, 2, 2), 850.0, 700.0, 0.5);
    c.seed = 42;
    let a = run_checked(&c, 300);
    let b = run_checked(&c, 300);
    assert_eq!(a, b);
}

#[test]
fn noise_free_idm_under_signals_is_collision_free() {
    let mut c = ScenarioConfig::new(NetworkSpec::new(Topology::TwoWay, 2, 1), 1000.0, 1000.0, 1.0 / 3.0)
        .with_control(IntersectionControl::Signal(SignalPlan::equal(25.0)));
    c.idm.noise_sigma = 0.0;
    let mut s = SimState::reset(&c).unwrap();
    for _ in 0..1500 {
        let m = s.step(&AvActions::new()).unwrap();
        assert_eq!(m.collisions, 0);
    }
    assert!(s.totals().exited > 0);
}
