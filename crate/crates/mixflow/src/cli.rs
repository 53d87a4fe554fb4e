//! Argument parsing and the five subcommands.

use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixflow_core::baselines::{oracle_for, OracleSearch, SignalPlan};
use mixflow_core::exec::Executor;
use mixflow_core::network::RouteId;
use mixflow_core::nn::Checkpoint;
use mixflow_core::rl::{select_best, Profile, Trainer};
use mixflow_core::rollout::{ActionMode, Episode};
use mixflow_core::sim::{evaluate_seed, EvalSummary, EvalWindow, ScenarioConfig, INFLOW_CONFIGS};

use crate::config::{ExperimentSpec, InflowSet, Inflows};
use crate::controller::{load_checkpoint, ControllerSpec, FixedKind, OracleRow, OracleTable, Resolved};
use crate::error::{CliError, Result};
use crate::exec::Rayon;

/// Evaluation episodes per inflow configuration when `--seeds` is absent.
pub const DEFAULT_SEEDS: usize = 10;
/// Episodes per plan while the Oracle search is running.
pub const ORACLE_SEARCH_SEEDS: usize = 3;

#[derive(Debug, Parser)]
#[command(name = "mixflow", version, about = "Mixed-autonomy intersection control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a shared policy, one environment per inflow configuration.
    Train(Common),
    /// Evaluate controllers per inflow configuration and seed.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Take the most likely action instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Tune fixed-time phase lengths per inflow configuration.
    OracleSearch(Common),
    /// Outflow matrix over the inflow configurations, one file per controller.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        greedy: bool,
    },
    /// Vehicle positions over time for plotting time-space diagrams.
    Timespace {
        #[command(flatten)]
        common: Common,
        /// Route to export (default 0).
        #[arg(long, conflicts_with = "lane")]
        route: Option<usize>,
        /// Export a single lane instead of a route.
        #[arg(long)]
        lane: Option<usize>,
        /// Post-warmup steps to record (default: the scenario horizon).
        #[arg(long)]
        steps: Option<u64>,
        /// Also write every AV observation and action to obs.csv.
        #[arg(long)]
        dump_obs: bool,
        #[arg(long)]
        greedy: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, value_enum)]
    pub profile: Option<ProfileArg>,
    /// NAME[:ARGS]; may be repeated for `eval` and `sweep`.
    #[arg(long)]
    pub controller: Vec<String>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Oracle table (`oracle.csv`) for the percent-of-Oracle column.
    #[arg(long)]
    pub oracle: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            let _ = e.print();
            CliError::Help
        }
        _ => CliError::Config(e.to_string()),
    })?;
    match cli.command {
        Command::Train(common) => Session::new(common)?.train(),
        Command::Eval { common, greedy } => Session::new(common)?.eval(mode(greedy)),
        Command::OracleSearch(common) => Session::new(common)?.oracle_search(),
        Command::Sweep { common, greedy } => Session::new(common)?.sweep(mode(greedy)),
        Command::Timespace {
            common,
            route,
            lane,
            steps,
            dump_obs,
            greedy,
        } => {
            let selection = match lane {
                Some(l) => Selection::Lane(l),
                None => Selection::Route(route.unwrap_or(0)),
            };
            Session::new(common)?.timespace(selection, steps, dump_obs, mode(greedy))
        }
    }
}

fn mode(greedy: bool) -> ActionMode {
    if greedy {
        ActionMode::Greedy
    } else {
        ActionMode::Sample
    }
}

#[derive(Clone, Copy, Debug)]
enum Selection {
    Route(usize),
    Lane(usize),
}

struct OracleFinding {
    row: OracleRow,
    /// Seed standard deviation of the re-scored outflow.
    std: f64,
    visited: Vec<(SignalPlan, f64)>,
}

struct Session {
    common: Common,
    spec: ExperimentSpec,
}

impl Session {
    fn new(common: Common) -> Result<Self> {
        let mut spec = ExperimentSpec::load(&common.config)?;
        if let Some(p) = common.profile {
            spec.profile = match p {
                ProfileArg::Desk => Profile::Desk,
                ProfileArg::Paper => Profile::Paper,
            };
        }
        if common.seeds == Some(0) {
            return Err(CliError::Config("--seeds must be at least 1".into()));
        }
        Ok(Session { common, spec })
    }

    fn seeds(&self) -> usize {
        self.common.seeds.or(self.spec.seeds).unwrap_or(DEFAULT_SEEDS)
    }

    fn out_dir(&self) -> Result<&Path> {
        let out = &self.common.out;
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(out)
    }

    fn checkpoint_path(&self) -> Option<&Path> {
        self.common.checkpoint.as_deref().or(self.spec.checkpoint.as_deref())
    }

    fn oracle_path(&self) -> Option<&Path> {
        self.common.oracle.as_deref().or(self.spec.oracle.as_deref())
    }

    fn controllers(&self) -> Result<Vec<ControllerSpec>> {
        let names: Vec<String> = if !self.common.controller.is_empty() {
            self.common.controller.clone()
        } else if let Some(c) = &self.spec.controller {
            vec![c.clone()]
        } else if self.checkpoint_path().is_some() {
            vec!["learned".into()]
        } else {
            vec!["all-idm".into()]
        };
        names.iter().map(|n| n.parse()).collect()
    }

    fn window(&self, config: &ScenarioConfig) -> EvalWindow {
        EvalWindow::new(config.horizon)
    }

    fn resolve(&self, spec: &ControllerSpec, scenarios: &[ScenarioConfig], mode: ActionMode) -> Result<Resolved> {
        Ok(match spec {
            ControllerSpec::Learned(path) => {
                let path = path
                    .as_deref()
                    .or(self.checkpoint_path())
                    .ok_or_else(|| CliError::Config("learned controller needs a checkpoint".into()))?;
                Resolved::Policy(load_checkpoint(path)?.params, mode)
            }
            ControllerSpec::Oracle => match self.oracle_path() {
                Some(p) => Resolved::Oracle(OracleTable::load(p)?),
                None => Resolved::Oracle(self.search_oracles(scenarios)?.0),
            },
            ControllerSpec::Equal(t) => Resolved::Fixed(FixedKind::Signal(SignalPlan::equal(*t))),
            ControllerSpec::Signal(h, v) => Resolved::Fixed(FixedKind::Signal(SignalPlan::new(*h, *v))),
            ControllerSpec::MaxPressure(t) => Resolved::Fixed(FixedKind::MaxPressure(*t)),
            ControllerSpec::Priority(axis) => Resolved::Fixed(FixedKind::Priority(*axis)),
            ControllerSpec::AllIdm => Resolved::Fixed(FixedKind::AllIdm),
        })
    }

    /// Evaluates every scenario with `n` seeds; all (scenario, seed) pairs
    /// run in parallel.
    fn evaluate_all(&self, ctrl: &Resolved, scenarios: &[ScenarioConfig]) -> Result<Vec<EvalSummary>> {
        let n = self.seeds();
        let mut jobs = Vec::with_capacity(scenarios.len() * n);
        for (i, s) in scenarios.iter().enumerate() {
            let c = ctrl.for_scenario(s)?;
            for k in 0..n as u64 {
                jobs.push((i, c, s.seed.wrapping_add(k)));
            }
        }
        let outcomes = Rayon.map(&jobs, |&(i, c, seed)| {
            evaluate_seed(&scenarios[i], c, self.window(&scenarios[i]), seed)
        });
        let mut outcomes = outcomes.into_iter();
        scenarios
            .iter()
            .map(|_| {
                let chunk = outcomes.by_ref().take(n).collect::<mixflow_core::Result<Vec<_>>>()?;
                Ok(EvalSummary::from_outcomes(chunk))
            })
            .collect()
    }

    fn search_oracles(&self, scenarios: &[ScenarioConfig]) -> Result<(OracleTable, Vec<OracleFinding>)> {
        let n = self.seeds();
        let results = Rayon.map(scenarios, |s| {
            let search = OracleSearch::with_count_resolution(s, self.window(s));
            oracle_for(s, &search, self.window(s), ORACLE_SEARCH_SEEDS, n, &Rayon)
        });
        let mut table = OracleTable::default();
        let mut details = Vec::new();
        for (s, r) in scenarios.iter().zip(results) {
            let (result, summary) = r?;
            let row = OracleRow {
                f_h: s.f_h,
                f_v: s.f_v,
                plan: result.plan,
                outflow: summary.mean_outflow,
            };
            table.insert(row);
            details.push(OracleFinding {
                row,
                std: summary.std_outflow,
                visited: result.visited,
            });
        }
        Ok((table, details))
    }

    fn train(&self) -> Result<()> {
        let out = self.out_dir()?;
        let config = self.spec.train_config();
        let envs = self.spec.scenarios();
        let init = match self
            .spec
            .train
            .init_checkpoint
            .as_deref()
            .or(self.common.checkpoint.as_deref())
        {
            Some(p) => Some(load_checkpoint(p)?.params),
            None => None,
        };
        let mut trainer = Trainer::new(config.clone(), envs, init)?;

        let mut resolved = self.spec.clone();
        resolved.train = crate::config::TrainOverrides {
            gamma: Some(config.gamma),
            learning_rate: Some(config.learning_rate),
            lambda_o: Some(config.lambda_o),
            lambda_c: Some(config.lambda_c),
            batch_size: Some(config.batch_size),
            horizon: Some(config.horizon),
            max_updates: Some(config.max_updates),
            checkpoint_interval: Some(config.checkpoint_interval),
            seed: Some(config.seed),
            init_checkpoint: self.spec.train.init_checkpoint.clone(),
        };
        write_file(&out.join("config.json"), resolved.to_json().as_bytes())?;

        let log_path = out.join("train_log.csv");
        let mut log = csv::Writer::from_path(&log_path)?;
        log.write_record([
            "update",
            "mean_outflow",
            "std_outflow",
            "mean_collisions",
            "grad_norm",
            "wall_time_s",
        ])?;
        let start = Instant::now();
        let mut io_err: Option<CliError> = None;
        let history = trainer.train(&Rayon, |r| {
            let row = [
                r.update.to_string(),
                r.mean_outflow.to_string(),
                r.std_outflow.to_string(),
                r.mean_collisions.to_string(),
                r.grad_norm.map(|g| g.to_string()).unwrap_or_default(),
                format!("{:.3}", start.elapsed().as_secs_f64()),
            ];
            let written = log
                .write_record(&row)
                .map_err(CliError::from)
                .and_then(|_| log.flush().map_err(|e| CliError::io(&log_path, e)))
                .and_then(|_| match &r.checkpoint {
                    Some(ck) => write_file(&out.join(checkpoint_name(ck)), &ck.encode()),
                    None => Ok(()),
                });
            written.map_err(|e| {
                io_err = Some(e);
                mixflow_core::Error::Checkpoint("output write failed")
            })
        });
        let history = match (history, io_err) {
            (_, Some(e)) => return Err(e),
            (h, None) => h?,
        };
        let best = &history[select_best(&history)?];
        write_file(&out.join("best"), format!("{}\n", checkpoint_name(best)).as_bytes())?;
        eprintln!(
            "trained {} updates; best checkpoint {} (batch mean outflow {:.1} veh/hr)",
            trainer.update_index(),
            checkpoint_name(best),
            best.mean_outflow
        );
        Ok(())
    }

    fn eval(&self, mode: ActionMode) -> Result<()> {
        let out = self.out_dir()?;
        let scenarios = self.spec.scenarios();
        let oracle = self.oracle_path().map(OracleTable::load).transpose()?;
        for spec in self.controllers()? {
            let ctrl = self.resolve(&spec, &scenarios, mode)?;
            let reference = match (&oracle, &ctrl) {
                (Some(t), _) => Some(t),
                (None, Resolved::Oracle(t)) => Some(t),
                _ => None,
            };
            let summaries = self.evaluate_all(&ctrl, &scenarios)?;
            let path = out.join(format!("eval_{}.csv", spec.label()));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record([
                "controller",
                "f_h",
                "f_v",
                "seed",
                "outflow_veh_hr",
                "collisions",
                "collisions_per_hr",
                "outflow_std",
                "pct_of_oracle",
            ])?;
            let label = spec.to_string();
            for (s, sum) in scenarios.iter().zip(&summaries) {
                let oracle_outflow = reference.and_then(|t| t.get(s.f_h, s.f_v)).map(|r| r.outflow);
                let pct = |x: f64| oracle_outflow.map(|o| (100.0 * x / o).to_string()).unwrap_or_default();
                for o in &sum.outcomes {
                    w.write_record([
                        label.clone(),
                        s.f_h.to_string(),
                        s.f_v.to_string(),
                        o.seed.to_string(),
                        o.outflow_veh_hr.to_string(),
                        o.collisions.to_string(),
                        o.collisions_per_hr.to_string(),
                        String::new(),
                        pct(o.outflow_veh_hr),
                    ])?;
                }
                let mean_collisions =
                    sum.outcomes.iter().map(|o| o.collisions as f64).sum::<f64>() / sum.outcomes.len() as f64;
                w.write_record([
                    label.clone(),
                    s.f_h.to_string(),
                    s.f_v.to_string(),
                    "mean".into(),
                    sum.mean_outflow.to_string(),
                    mean_collisions.to_string(),
                    sum.mean_collisions_per_hr.to_string(),
                    sum.std_outflow.to_string(),
                    pct(sum.mean_outflow),
                ])?;
                eprintln!(
                    "{label} ({}, {}): {:.1} ± {:.1} veh/hr, {:.2} collisions/hr",
                    s.f_h, s.f_v, sum.mean_outflow, sum.std_outflow, sum.mean_collisions_per_hr
                );
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
        Ok(())
    }

    fn oracle_search(&self) -> Result<()> {
        let out = self.out_dir()?;
        let scenarios = self.spec.scenarios();
        let (_, details) = self.search_oracles(&scenarios)?;

        let mut visited = csv::Writer::from_path(out.join("oracle_visited.csv"))?;
        visited.write_record(["f_h", "f_v", "order", "tau_h", "tau_v", "search_outflow"])?;
        let mut table = csv::Writer::from_path(out.join("oracle.csv"))?;
        table.write_record([
            "f_h",
            "f_v",
            "tau_h",
            "tau_v",
            "search_outflow",
            "outflow_veh_hr",
            "outflow_std",
        ])?;
        for OracleFinding {
            row,
            std,
            visited: trail,
        } in &details
        {
            for (i, (plan, score)) in trail.iter().enumerate() {
                visited.write_record([
                    row.f_h.to_string(),
                    row.f_v.to_string(),
                    i.to_string(),
                    plan.tau_h.to_string(),
                    plan.tau_v.to_string(),
                    score.to_string(),
                ])?;
            }
            let search_outflow = trail
                .iter()
                .find(|(p, _)| p == &row.plan)
                .map(|(_, s)| *s)
                .unwrap_or(f64::NAN);
            table.write_record([
                row.f_h.to_string(),
                row.f_v.to_string(),
                row.plan.tau_h.to_string(),
                row.plan.tau_v.to_string(),
                search_outflow.to_string(),
                row.outflow.to_string(),
                std.to_string(),
            ])?;

            let mut spec = self.spec.clone();
            spec.scenario.f_h = row.f_h;
            spec.scenario.f_v = row.f_v;
            spec.inflows = None;
            spec.controller = Some(ControllerSpec::Signal(row.plan.tau_h, row.plan.tau_v).to_string());
            write_file(
                &out.join(format!("oracle_{}_{}.json", row.f_h, row.f_v)),
                spec.to_json().as_bytes(),
            )?;
            eprintln!(
                "oracle ({}, {}): tau = ({}, {}), {:.1} ± {:.1} veh/hr",
                row.f_h, row.f_v, row.plan.tau_h, row.plan.tau_v, row.outflow, std
            );
        }
        visited.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        table.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(())
    }

    fn sweep(&self, mode: ActionMode) -> Result<()> {
        let out = self.out_dir()?;
        let mut spec = self.spec.clone();
        if spec.inflows.is_none() {
            spec.inflows = Some(Inflows::Named(InflowSet::Table));
        }
        let scenarios = spec.scenarios();
        let mut f_hs: Vec<f64> = INFLOW_CONFIGS
            .iter()
            .map(|c| c.0)
            .chain(scenarios.iter().map(|s| s.f_h))
            .collect();
        let mut f_vs: Vec<f64> = INFLOW_CONFIGS
            .iter()
            .map(|c| c.1)
            .chain(scenarios.iter().map(|s| s.f_v))
            .collect();
        f_hs.sort_by(|a, b| b.total_cmp(a));
        f_hs.dedup();
        f_vs.sort_by(f64::total_cmp);
        f_vs.dedup();

        for cspec in self.controllers()? {
            let ctrl = self.resolve(&cspec, &scenarios, mode)?;
            let summaries = self.evaluate_all(&ctrl, &scenarios)?;
            let path = out.join(format!("sweep_{}.csv", cspec.label()));
            let mut w = csv::Writer::from_path(&path)?;
            let header: Vec<String> = std::iter::once("f_h\\f_v".to_string())
                .chain(f_vs.iter().map(f64::to_string))
                .collect();
            w.write_record(&header)?;
            for &f_h in &f_hs {
                let mut row = vec![f_h.to_string()];
                for &f_v in &f_vs {
                    let cell = scenarios
                        .iter()
                        .zip(&summaries)
                        .find(|(s, _)| s.f_h == f_h && s.f_v == f_v)
                        .map(|(_, sum)| sum.mean_outflow.to_string())
                        .unwrap_or_default();
                    row.push(cell);
                }
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }

    fn timespace(&self, selection: Selection, steps: Option<u64>, dump_obs: bool, mode: ActionMode) -> Result<()> {
        let out = self.out_dir()?;
        let scenario = self.spec.scenario.clone();
        let cspec = self.controllers()?.into_iter().next().expect("at least one controller");
        let ctrl = self.resolve(&cspec, std::slice::from_ref(&scenario), mode)?;
        let mut episode = Episode::start(&scenario, ctrl.for_scenario(&scenario)?)?;
        let net = episode.state().network_arc().clone();
        match selection {
            Selection::Route(r) if r >= net.routes().len() => {
                return Err(CliError::Config(format!(
                    "route {r} does not exist ({} routes)",
                    net.routes().len()
                )))
            }
            Selection::Lane(l) if l >= net.lanes().len() => {
                return Err(CliError::Config(format!(
                    "lane {l} does not exist ({} lanes)",
                    net.lanes().len()
                )))
            }
            _ => {}
        }

        let mut w = csv::Writer::from_path(out.join("timespace.csv"))?;
        w.write_record([
            "time_s",
            "step",
            "vehicle_id",
            "class",
            "route",
            "heading",
            "lane_id",
            "position_m",
            "lane_position_m",
            "speed_m_s",
        ])?;
        let mut obs_w = if dump_obs {
            let mut o = csv::Writer::from_path(out.join("obs.csv"))?;
            let mut header = vec![
                "step".to_string(),
                "vehicle_id".into(),
                "action".into(),
                "p_accel".into(),
                "p_hold".into(),
                "p_brake".into(),
            ];
            header.extend((0..mixflow_core::obs::OBS_DIM).map(|i| format!("o{i}")));
            o.write_record(&header)?;
            Some(o)
        } else {
            None
        };

        let dt = scenario.delta_t;
        let total = steps.unwrap_or(scenario.horizon);
        for step in 0..=total {
            let state = episode.state();
            for v in state.vehicles() {
                let keep = match selection {
                    Selection::Route(r) => v.route == RouteId(r),
                    Selection::Lane(l) => v.lane.0 == l,
                };
                if keep {
                    w.write_record([
                        (step as f64 * dt).to_string(),
                        step.to_string(),
                        v.id.0.to_string(),
                        v.class.as_str().to_string(),
                        v.route.0.to_string(),
                        v.heading.as_str().to_string(),
                        v.lane.0.to_string(),
                        v.route_pos.to_string(),
                        v.lane_pos.to_string(),
                        v.speed.to_string(),
                    ])?;
                }
            }
            if step == total {
                break;
            }
            let (agents, _) = episode.step()?;
            if let Some(o) = obs_w.as_mut() {
                for a in &agents {
                    let mut rec = vec![step.to_string(), a.vehicle.0.to_string(), a.action.index().to_string()];
                    rec.extend(a.probs.iter().map(f64::to_string));
                    rec.extend(a.obs.as_slice().iter().map(f64::to_string));
                    o.write_record(&rec)?;
                }
            }
        }
        w.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        if let Some(mut o) = obs_w {
            o.flush().map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        Ok(())
    }
}

/// File name of a checkpoint inside a training directory.
pub fn checkpoint_name(ck: &Checkpoint) -> String {
    format!("ckpt_{:04}.bin", ck.update)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(path, e))
}
