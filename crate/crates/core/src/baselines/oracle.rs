use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::SignalPlan;
use crate::exec::Executor;
use crate::rollout::{per_hour, Controller};
use crate::sim::{evaluate, EvalSummary, EvalWindow, ScenarioConfig};
use crate::Result;

/// Coordinate hill climbing over the two phase lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSearch {
    pub start: SignalPlan,
    /// Step sizes tried in turn (s); the search moves on to the next one
    /// when no neighbour improves.
    pub steps: Vec<f64>,
    /// Maximum number of distinct plans evaluated.
    pub budget: usize,
    /// Shortest phase considered (s).
    pub min_phase_s: f64,
    /// A neighbour must beat the incumbent by more than this (veh/hr).
    pub min_improvement: f64,
}

impl Default for OracleSearch {
    fn default() -> Self {
        OracleSearch {
            start: SignalPlan::equal(super::TAU_EQUAL_S),
            steps: vec![8.0, 4.0, 2.0, 1.0],
            budget: 200,
            min_phase_s: 2.0,
            min_improvement: 0.0,
        }
    }
}

impl OracleSearch {
    /// Default search that treats gains below one vehicle per episode, the
    /// resolution of a windowed count, as ties.
    pub fn with_count_resolution(config: &ScenarioConfig, window: EvalWindow) -> Self {
        OracleSearch {
            min_improvement: per_hour(1, window.horizon, config.delta_t),
            ..OracleSearch::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub plan: SignalPlan,
    /// Search score of `plan`.
    pub outflow: f64,
    /// Every evaluated plan with its score, in evaluation order.
    pub visited: Vec<(SignalPlan, f64)>,
}

/// Hill climbing from `search.start`. At each step size all four neighbours
/// `(tau_h ± s, tau_v)` and `(tau_h, tau_v ± s)` are scored and the best one
/// is taken if it improves; otherwise the step size shrinks. `evaluate`
/// returns the mean outflow of a plan and is called once per distinct plan.
pub fn oracle_search<F>(search: &OracleSearch, mut evaluate: F) -> Result<OracleResult>
where
    F: FnMut(&SignalPlan) -> Result<f64>,
{
    let key = |p: &SignalPlan| (p.tau_h.to_bits(), p.tau_v.to_bits());
    let mut cache: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut visited = Vec::new();

    let mut best = search.start;
    if search.budget == 0 {
        return Ok(OracleResult {
            plan: best,
            outflow: f64::NAN,
            visited,
        });
    }
    let mut best_score = evaluate(&best)?;
    cache.insert(key(&best), best_score);
    visited.push((best, best_score));

    'steps: for &step in &search.steps {
        loop {
            let candidates = [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)].map(|(dh, dv)| {
                let mut p = best;
                p.tau_h += dh;
                p.tau_v += dv;
                p
            });
            let mut round_best: Option<(SignalPlan, f64)> = None;
            for cand in candidates {
                if cand.tau_h < search.min_phase_s || cand.tau_v < search.min_phase_s {
                    continue;
                }
                let score = match cache.get(&key(&cand)) {
                    Some(&s) => s,
                    None => {
                        if cache.len() >= search.budget {
                            break 'steps;
                        }
                        let s = evaluate(&cand)?;
                        cache.insert(key(&cand), s);
                        visited.push((cand, s));
                        s
                    }
                };
                if round_best.is_none_or(|(_, b)| score > b) {
                    round_best = Some((cand, score));
                }
            }
            match round_best {
                Some((plan, score)) if score > best_score + search.min_improvement => {
                    best = plan;
                    best_score = score;
                }
                _ => break,
            }
        }
    }

    Ok(OracleResult {
        plan: best,
        outflow: best_score,
        visited,
    })
}

/// Oracle plan for one scenario: the search scores plans with
/// `search_seeds` episodes, then the winner is re-scored with
/// `final_seeds`. Seeds start at `config.seed` in both phases.
pub fn oracle_for<E: Executor>(
    config: &ScenarioConfig,
    search: &OracleSearch,
    window: EvalWindow,
    search_seeds: usize,
    final_seeds: usize,
    exec: &E,
) -> Result<(OracleResult, EvalSummary)> {
    let result = oracle_search(search, |plan| {
        Ok(evaluate(config, Controller::Signal(*plan), window, search_seeds, exec)?.mean_outflow)
    })?;
    let summary = evaluate(config, Controller::Signal(result.plan), window, final_seeds, exec)?;
    Ok((result, summary))
}
