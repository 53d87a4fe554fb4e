//! Non-learning controllers: fixed-time and MaxPressure signals, the Oracle
//! phase search and priority (stop-sign) control. All of them drive every
//! vehicle with IDM.

mod oracle;
mod signals;

pub use oracle::{oracle_for, oracle_search, OracleResult, OracleSearch};
pub use signals::{fixed_signal, max_pressure, PhaseState, SignalPlan};

use alloc::vec::Vec;

use crate::network::Axis;
use crate::sim::{stop_targets, IntersectionControl, SimState, VehicleId};

/// Signal plan shared by the Equal-phase baseline.
pub const TAU_EQUAL_S: f64 = 25.0;

/// Stop targets under priority control: leaders on the other axis that must
/// stop at their stop line, with the distance from their front to it.
/// Vehicles on `priority` never appear.
pub fn priority_control(state: &SimState, priority: Axis) -> Vec<(VehicleId, f64)> {
    stop_targets(state, IntersectionControl::Priority { axis: priority })
}
