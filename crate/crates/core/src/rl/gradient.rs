use alloc::vec;
use alloc::vec::Vec;

use crate::exec::Executor;
use crate::nn::PolicyParams;
use crate::rollout::Trajectory;
use crate::{Error, Result};

/// `G_t = sum_{t' >= t} gamma^(t' - t) r_t'`.
pub fn reward_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// `sum_t G_t sum_i grad log pi(a_t^i | o_t^i)` of one trajectory, using its
/// normalized rewards.
pub fn trajectory_gradient(params: &PolicyParams, traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let g = reward_to_go(&rewards, gamma);
    let mut grad = vec![0.0; params.len()];
    for (step, &g_t) in traj.steps.iter().zip(&g) {
        if g_t == 0.0 {
            continue;
        }
        for agent in &step.agents {
            params.accumulate_logprob_grad(agent.obs.as_slice(), agent.action.index(), g_t, &mut grad)?;
        }
    }
    Ok(grad)
}

/// REINFORCE gradient averaged over the batch. Per-trajectory gradients are
/// summed in batch order whatever the executor.
pub fn reinforce_gradient<E: Executor>(
    params: &PolicyParams,
    batch: &[Trajectory],
    gamma: f64,
    exec: &E,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let parts = exec.map(batch, |t| trajectory_gradient(params, t, gamma));
    let mut total = vec![0.0; params.len()];
    for part in parts {
        for (a, b) in total.iter_mut().zip(part?) {
            *a += b;
        }
    }
    let n = batch.len() as f64;
    total.iter_mut().for_each(|g| *g /= n);
    Ok(total)
}
