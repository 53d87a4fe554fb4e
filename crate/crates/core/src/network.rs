//! Grid networks of single-lane, through-only intersections.
//!
//! A network with `rows` horizontal roads and `cols` vertical roads has one
//! intersection per crossing. Every road is split into lane segments of equal
//! length between consecutive intersections (and the borders), and every
//! entry lane starts exactly one straight-through [`Route`].
//!
//! Row 0 is the southernmost horizontal road and column 0 the westernmost
//! vertical road, so a Northbound route meets rows in increasing order and an
//! Eastbound route meets columns in increasing order.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// One-way horizontal (Eastbound) roads crossing one-way vertical
    /// (Northbound) roads: two approaches per intersection.
    TwoWay,
    /// Bidirectional roads crossing: four approaches per intersection.
    FourWay,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Direction of travel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heading {
    Eastbound,
    Northbound,
    Westbound,
    Southbound,
}

impl Heading {
    pub const ALL: [Heading; 4] = [
        Heading::Eastbound,
        Heading::Northbound,
        Heading::Westbound,
        Heading::Southbound,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn axis(self) -> Axis {
        match self {
            Heading::Eastbound | Heading::Westbound => Axis::Horizontal,
            Heading::Northbound | Heading::Southbound => Axis::Vertical,
        }
    }

    pub fn opposite(self) -> Heading {
        match self {
            Heading::Eastbound => Heading::Westbound,
            Heading::Westbound => Heading::Eastbound,
            Heading::Northbound => Heading::Southbound,
            Heading::Southbound => Heading::Northbound,
        }
    }

    /// Through movements cross iff they are perpendicular.
    pub fn conflicts_with(self, other: Heading) -> bool {
        self.axis() != other.axis()
    }

    /// Position of this heading's approach when walking clockwise around an
    /// intersection starting from the west side (north up).
    ///
    /// Eastbound traffic arrives from the west, Southbound from the north,
    /// Westbound from the east and Northbound from the south.
    pub fn clockwise_slot(self) -> usize {
        match self {
            Heading::Eastbound => 0,
            Heading::Southbound => 1,
            Heading::Westbound => 2,
            Heading::Northbound => 3,
        }
    }

    pub fn from_clockwise_slot(slot: usize) -> Heading {
        match slot % 4 {
            0 => Heading::Eastbound,
            1 => Heading::Southbound,
            2 => Heading::Westbound,
            _ => Heading::Northbound,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Heading::Eastbound => "eastbound",
            Heading::Northbound => "northbound",
            Heading::Westbound => "westbound",
            Heading::Southbound => "southbound",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LaneId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntersectionId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RouteId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Intersection(IntersectionId),
    /// Network border: entry when upstream, exit when downstream.
    Border,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_lane_length")]
    pub lane_length_m: f64,
    #[serde(default = "default_speed_limit")]
    pub speed_limit_mps: f64,
}

fn default_lane_length() -> f64 {
    100.0
}

fn default_speed_limit() -> f64 {
    13.0
}

impl NetworkSpec {
    pub fn new(topology: Topology, rows: usize, cols: usize) -> Self {
        NetworkSpec {
            topology,
            rows,
            cols,
            lane_length_m: default_lane_length(),
            speed_limit_mps: default_speed_limit(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidNetwork("rows and cols must be at least 1"));
        }
        if !self.lane_length_m.is_finite() || self.lane_length_m <= 0.0 {
            return Err(Error::InvalidNetwork("lane length must be positive"));
        }
        if !self.speed_limit_mps.is_finite() || self.speed_limit_mps <= 0.0 {
            return Err(Error::InvalidNetwork("speed limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lane {
    pub id: LaneId,
    pub heading: Heading,
    pub length_m: f64,
    pub upstream: Endpoint,
    pub downstream: Endpoint,
    pub route: RouteId,
    /// Position of this lane within its route.
    pub index_in_route: usize,
}

impl Lane {
    pub fn is_entry(&self) -> bool {
        self.upstream == Endpoint::Border
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Intersection {
    pub id: IntersectionId,
    pub row: usize,
    pub col: usize,
    /// Incoming lane per heading, indexed by [`Heading::index`].
    pub approaches: [Option<LaneId>; 4],
    /// Outgoing lane per heading, indexed by [`Heading::index`].
    pub exits: [Option<LaneId>; 4],
    pub conflict_pairs: Vec<(Heading, Heading)>,
}

impl Intersection {
    pub fn approach(&self, heading: Heading) -> Option<LaneId> {
        self.approaches[heading.index()]
    }

    pub fn exit(&self, heading: Heading) -> Option<LaneId> {
        self.exits[heading.index()]
    }

    pub fn headings(&self) -> impl Iterator<Item = Heading> + '_ {
        Heading::ALL
            .into_iter()
            .filter(|h| self.approaches[h.index()].is_some())
    }

    pub fn conflicts(&self, a: Heading, b: Heading) -> bool {
        self.conflict_pairs
            .iter()
            .any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
    }
}

/// A straight-through path from an entry lane to the opposite border.
#[derive(Clone, Debug, PartialEq)]
pub struct Route {
    pub id: RouteId,
    pub heading: Heading,
    pub lanes: Vec<LaneId>,
    /// `junctions[k]` sits between `lanes[k]` and `lanes[k + 1]`.
    pub junctions: Vec<IntersectionId>,
}

impl Route {
    pub fn entry(&self) -> LaneId {
        self.lanes[0]
    }
}

/// Immutable grid topology.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    lanes: Vec<Lane>,
    intersections: Vec<Intersection>,
    routes: Vec<Route>,
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn lanes(&self) -> &[Lane] {
        &self.lanes
    }

    pub fn lane(&self, id: LaneId) -> &Lane {
        &self.lanes[id.0]
    }

    pub fn intersections(&self) -> &[Intersection] {
        &self.intersections
    }

    pub fn intersection(&self, id: IntersectionId) -> &Intersection {
        &self.intersections[id.0]
    }

    pub fn intersection_at(&self, row: usize, col: usize) -> Option<&Intersection> {
        if row < self.spec.rows && col < self.spec.cols {
            Some(&self.intersections[row * self.spec.cols + col])
        } else {
            None
        }
    }

    pub fn routes(&self) -> &[Route] {
        &self.routes
    }

    pub fn route(&self, id: RouteId) -> &Route {
        &self.routes[id.0]
    }

    pub fn lane_length(&self) -> f64 {
        self.spec.lane_length_m
    }

    pub fn speed_limit(&self) -> f64 {
        self.spec.speed_limit_mps
    }

    pub fn entry_lanes(&self) -> impl Iterator<Item = LaneId> + '_ {
        self.routes.iter().map(Route::entry)
    }

    /// Lane sequence from `entry` to the opposite border.
    pub fn route_from_entry(&self, entry: LaneId) -> Result<&[LaneId]> {
        let lane = self.lanes.get(entry.0).ok_or(Error::NotAnEntryLane(entry))?;
        if !lane.is_entry() {
            return Err(Error::NotAnEntryLane(entry));
        }
        Ok(&self.routes[lane.route.0].lanes)
    }

    /// Route that passes through `intersection` travelling in `heading`, with
    /// the index of the junction along that route.
    pub fn route_through(&self, intersection: IntersectionId, heading: Heading) -> Option<(RouteId, usize)> {
        let lane = self.intersection(intersection).approach(heading)?;
        let lane = self.lane(lane);
        Some((lane.route, lane.index_in_route))
    }
}

/// Builds the grid described by `spec`.
pub fn build_grid(spec: &NetworkSpec) -> Result<Network> {
    spec.validate()?;
    let rows = spec.rows;
    let cols = spec.cols;

    let mut intersections: Vec<Intersection> = (0..rows * cols)
        .map(|i| Intersection {
            id: IntersectionId(i),
            row: i / cols,
            col: i % cols,
            approaches: [None; 4],
            exits: [None; 4],
            conflict_pairs: Vec::new(),
        })
        .collect();

    // Junction sequence for every route, in travel order.
    let mut route_plans: Vec<(Heading, Vec<IntersectionId>)> = Vec::new();
    let at = |r: usize, c: usize| IntersectionId(r * cols + c);
    for r in 0..rows {
        route_plans.push((Heading::Eastbound, (0..cols).map(|c| at(r, c)).collect()));
    }
    if spec.topology == Topology::FourWay {
        for r in 0..rows {
            route_plans.push((Heading::Westbound, (0..cols).rev().map(|c| at(r, c)).collect()));
        }
    }
    for c in 0..cols {
        route_plans.push((Heading::Northbound, (0..rows).map(|r| at(r, c)).collect()));
    }
    if spec.topology == Topology::FourWay {
        for c in 0..cols {
            route_plans.push((Heading::Southbound, (0..rows).rev().map(|r| at(r, c)).collect()));
        }
    }

    let mut lanes = Vec::new();
    let mut routes = Vec::new();
    for (route_idx, (heading, junctions)) in route_plans.into_iter().enumerate() {
        let route_id = RouteId(route_idx);
        let mut route_lanes = Vec::with_capacity(junctions.len() + 1);
        for k in 0..=junctions.len() {
            let id = LaneId(lanes.len());
            let upstream = if k == 0 {
                Endpoint::Border
            } else {
                Endpoint::Intersection(junctions[k - 1])
            };
            let downstream = match junctions.get(k) {
                Some(&j) => Endpoint::Intersection(j),
                None => Endpoint::Border,
            };
            if let Endpoint::Intersection(j) = downstream {
                intersections[j.0].approaches[heading.index()] = Some(id);
            }
            if let Endpoint::Intersection(j) = upstream {
                intersections[j.0].exits[heading.index()] = Some(id);
            }
            lanes.push(Lane {
                id,
                heading,
                length_m: spec.lane_length_m,
                upstream,
                downstream,
                route: route_id,
                index_in_route: k,
            });
            route_lanes.push(id);
        }
        routes.push(Route {
            id: route_id,
            heading,
            lanes: route_lanes,
            junctions,
        });
    }

    for inter in &mut intersections {
        let present: Vec<Heading> = inter.headings().collect();
        for (i, &a) in present.iter().enumerate() {
            for &b in &present[i + 1..] {
                if a.conflicts_with(b) {
                    inter.conflict_pairs.push((a, b));
                }
            }
        }
    }

    Ok(Network {
        spec: spec.clone(),
        lanes,
        intersections,
        routes,
    })
}
