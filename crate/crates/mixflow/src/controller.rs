//! `--controller NAME[:ARGS]` parsing and resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mixflow_core::baselines::{SignalPlan, TAU_EQUAL_S};
use mixflow_core::network::{Axis, NetworkSpec, Topology};
use mixflow_core::nn::{Checkpoint, PolicyParams, DEFAULT_DIMS};
use mixflow_core::rollout::{ActionMode, Controller};
use mixflow_core::sim::ScenarioConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ControllerSpec {
    /// Checkpoint file, or a training directory resolved through its `best`
    /// marker. `None` defers to `--checkpoint`.
    Learned(Option<PathBuf>),
    /// Per-inflow tuned fixed-time plan.
    Oracle,
    Equal(f64),
    Signal(f64, f64),
    /// `None` picks the default for the network.
    MaxPressure(Option<f64>),
    Priority(Axis),
    AllIdm,
}

fn number(s: &str, what: &str) -> Result<f64> {
    match s.trim().parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        _ => Err(CliError::Config(format!(
            "{what}: expected a positive number, got `{s}`"
        ))),
    }
}

impl FromStr for ControllerSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let spec = match (name, args) {
            ("learned", a) => ControllerSpec::Learned(a.map(PathBuf::from)),
            ("oracle", None) => ControllerSpec::Oracle,
            ("equal", None) => ControllerSpec::Equal(TAU_EQUAL_S),
            ("equal", Some(a)) => ControllerSpec::Equal(number(a, "equal")?),
            ("signal", Some(a)) => {
                let (h, v) = a
                    .split_once(',')
                    .ok_or_else(|| CliError::Config(format!("signal: expected TAU_H,TAU_V, got `{a}`")))?;
                ControllerSpec::Signal(number(h, "signal")?, number(v, "signal")?)
            }
            ("max-pressure", None) => ControllerSpec::MaxPressure(None),
            ("max-pressure", Some(a)) => ControllerSpec::MaxPressure(Some(number(a, "max-pressure")?)),
            ("priority", None | Some("vertical")) => ControllerSpec::Priority(Axis::Vertical),
            ("priority", Some("horizontal")) => ControllerSpec::Priority(Axis::Horizontal),
            ("all-idm", None) => ControllerSpec::AllIdm,
            _ => return Err(CliError::Config(format!("unknown controller `{s}`"))),
        };
        Ok(spec)
    }
}

impl fmt::Display for ControllerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerSpec::Learned(None) => write!(f, "learned"),
            ControllerSpec::Learned(Some(p)) => write!(f, "learned:{}", p.display()),
            ControllerSpec::Oracle => write!(f, "oracle"),
            ControllerSpec::Equal(t) => write!(f, "equal:{t}"),
            ControllerSpec::Signal(h, v) => write!(f, "signal:{h},{v}"),
            ControllerSpec::MaxPressure(None) => write!(f, "max-pressure"),
            ControllerSpec::MaxPressure(Some(t)) => write!(f, "max-pressure:{t}"),
            ControllerSpec::Priority(Axis::Vertical) => write!(f, "priority:vertical"),
            ControllerSpec::Priority(Axis::Horizontal) => write!(f, "priority:horizontal"),
            ControllerSpec::AllIdm => write!(f, "all-idm"),
        }
    }
}

impl ControllerSpec {
    /// Short name used in file names and the `controller` CSV column.
    pub fn label(&self) -> String {
        match self {
            ControllerSpec::Learned(_) => "learned".into(),
            ControllerSpec::Oracle => "oracle".into(),
            ControllerSpec::Equal(t) => format!("equal{t}"),
            ControllerSpec::Signal(h, v) => format!("signal{h}x{v}"),
            ControllerSpec::MaxPressure(None) => "max-pressure".into(),
            ControllerSpec::MaxPressure(Some(t)) => format!("max-pressure{t}"),
            ControllerSpec::Priority(Axis::Vertical) => "priority-vertical".into(),
            ControllerSpec::Priority(Axis::Horizontal) => "priority-horizontal".into(),
            ControllerSpec::AllIdm => "all-idm".into(),
        }
    }
}

/// Minimum MaxPressure phase when none is given (s).
pub fn default_tau_min(net: &NetworkSpec) -> f64 {
    match (net.topology, net.rows, net.cols) {
        (Topology::TwoWay, 2, 1) => 4.0,
        (Topology::TwoWay, 3, 3) => 6.0,
        (Topology::FourWay, 1, 1) => 12.0,
        _ => 4.0,
    }
}

/// File a `learned` controller reads: `path` itself, or the checkpoint named
/// by `path/best`.
pub fn resolve_checkpoint_path(path: &Path) -> Result<PathBuf> {
    if path.is_dir() {
        let marker = path.join("best");
        let name =
            std::fs::read_to_string(&marker).map_err(|e| CliError::Config(format!("{}: {e}", marker.display())))?;
        Ok(path.join(name.trim()))
    } else if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(CliError::Config(format!("{}: no such checkpoint", path.display())))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = resolve_checkpoint_path(path)?;
    let bytes = std::fs::read(&file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
    let ck = Checkpoint::decode(&bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
    ck.expect_dims(DEFAULT_DIMS)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", file.display())))?;
    Ok(ck)
}

fn inflow_key(f_h: f64, f_v: f64) -> (u64, u64) {
    (f_h.to_bits(), f_v.to_bits())
}

/// Oracle plans keyed by inflow configuration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleTable {
    rows: BTreeMap<(u64, u64), OracleRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleRow {
    pub f_h: f64,
    pub f_v: f64,
    pub plan: SignalPlan,
    /// Mean outflow of the plan over the evaluation seeds.
    pub outflow: f64,
}

impl OracleTable {
    pub fn insert(&mut self, row: OracleRow) {
        self.rows.insert(inflow_key(row.f_h, row.f_v), row);
    }

    pub fn get(&self, f_h: f64, f_v: f64) -> Option<&OracleRow> {
        self.rows.get(&inflow_key(f_h, f_v))
    }

    pub fn rows(&self) -> impl Iterator<Item = &OracleRow> {
        self.rows.values()
    }

    /// Reads an `oracle.csv` written by `oracle-search`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let headers = rd.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Config(format!("{}: missing column `{name}`", path.display())))
        };
        let idx = [
            col("f_h")?,
            col("f_v")?,
            col("tau_h")?,
            col("tau_v")?,
            col("outflow_veh_hr")?,
        ];
        let mut table = OracleTable::default();
        for rec in rd.records() {
            let rec = rec?;
            let mut x = [0.0; 5];
            for (slot, &i) in x.iter_mut().zip(&idx) {
                let field = rec.get(i).unwrap_or("");
                *slot = field
                    .parse()
                    .map_err(|_| CliError::Config(format!("{}: bad number `{field}`", path.display())))?;
            }
            table.insert(OracleRow {
                f_h: x[0],
                f_v: x[1],
                plan: SignalPlan::new(x[2], x[3]),
                outflow: x[4],
            });
        }
        Ok(table)
    }
}

/// A controller with its checkpoint loaded and its per-inflow plans known.
#[derive(Clone, Debug)]
pub enum Resolved {
    Policy(PolicyParams, ActionMode),
    Oracle(OracleTable),
    Fixed(FixedKind),
}

#[derive(Clone, Copy, Debug)]
pub enum FixedKind {
    Signal(SignalPlan),
    MaxPressure(Option<f64>),
    Priority(Axis),
    AllIdm,
}

impl Resolved {
    /// Core controller for one scenario.
    pub fn for_scenario<'a>(&'a self, config: &ScenarioConfig) -> Result<Controller<'a>> {
        Ok(match self {
            Resolved::Policy(params, mode) => Controller::Policy { params, mode: *mode },
            Resolved::Oracle(table) => {
                let row = table.get(config.f_h, config.f_v).ok_or_else(|| {
                    CliError::Config(format!(
                        "oracle table has no entry for ({}, {})",
                        config.f_h, config.f_v
                    ))
                })?;
                Controller::Signal(row.plan)
            }
            Resolved::Fixed(FixedKind::Signal(plan)) => Controller::Signal(*plan),
            Resolved::Fixed(FixedKind::MaxPressure(t)) => Controller::MaxPressure {
                tau_min_s: t.unwrap_or_else(|| default_tau_min(&config.network)),
            },
            Resolved::Fixed(FixedKind::Priority(axis)) => Controller::Priority(*axis),
            Resolved::Fixed(FixedKind::AllIdm) => Controller::AllIdm,
        })
    }
}
