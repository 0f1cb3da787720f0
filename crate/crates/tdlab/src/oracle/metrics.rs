use nalgebra::{DMatrix, DVector};

use super::features::LinearizedFeatures;
use super::solver::BallProjector;
use crate::env::{stationary_distribution, FiniteMdp, Policy, StationaryDist};
use crate::error::{Error, Result};
use crate::net::ProjectionSpec;

/// Hard max or softmax target in the optimality operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Softness {
    Hard,
    Soft(f64),
}

/// Numerically stable `beta^{-1} log sum_a exp(beta q_a)`.
///
/// Sandwiched between `max_a q_a` and `max_a q_a + log(n)/beta`.
pub fn softmax_value(beta: f64, q: &[f64]) -> f64 {
    debug_assert!(beta > 0.0 && !q.is_empty());
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = q.iter().map(|&v| ((v - max) * beta).exp()).sum();
    max + sum.ln() / beta
}

/// One application of the Bellman evaluation operator:
/// `(T q)(s,a) = r(s,a) + gamma E_{s',a'}[q(s',a')]`.
pub fn bellman_eval_apply(env: &FiniteMdp, policy: &Policy, q: &[f64]) -> Vec<f64> {
    let n_actions = env.n_actions();
    // expected next value per state under the policy
    let state_value: Vec<f64> = (0..env.n_states())
        .map(|s| {
            (0..n_actions)
                .map(|a| policy.prob(s, a) * q[env.pair_index(s, a)])
                .sum()
        })
        .collect();
    (0..env.n_pairs())
        .map(|p| {
            let (s, a) = env.pair_of(p);
            let next: f64 = env
                .next_state_row(s, a)
                .iter()
                .zip(&state_value)
                .map(|(&pr, &v)| pr * v)
                .sum();
            env.reward(s, a) + env.gamma() * next
        })
        .collect()
}

/// One application of the Bellman optimality operator, with a hard max or a
/// softmax over the next action.
pub fn bellman_opt_apply(env: &FiniteMdp, q: &[f64], softness: Softness) -> Vec<f64> {
    let n_actions = env.n_actions();
    let state_value: Vec<f64> = (0..env.n_states())
        .map(|s| {
            let row = &q[s * n_actions..(s + 1) * n_actions];
            match softness {
                Softness::Hard => row.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                Softness::Soft(beta) => softmax_value(beta, row),
            }
        })
        .collect();
    (0..env.n_pairs())
        .map(|p| {
            let (s, a) = env.pair_of(p);
            let next: f64 = env
                .next_state_row(s, a)
                .iter()
                .zip(&state_value)
                .map(|(&pr, &v)| pr * v)
                .sum();
            env.reward(s, a) + env.gamma() * next
        })
        .collect()
}

/// Exact Q-function of a policy, solving the linear Bellman system directly.
pub fn q_pi_exact(env: &FiniteMdp, policy: &Policy) -> Result<Vec<f64>> {
    let n = env.n_pairs();
    let n_actions = env.n_actions();
    let mut a = DMatrix::<f64>::identity(n, n);
    for p in 0..n {
        let (s, act) = env.pair_of(p);
        for (s_next, &pr) in env.next_state_row(s, act).iter().enumerate() {
            if pr == 0.0 {
                continue;
            }
            for a_next in 0..n_actions {
                a[(p, env.pair_index(s_next, a_next))] -=
                    env.gamma() * pr * policy.prob(s_next, a_next);
            }
        }
    }
    let b = DVector::from_iterator(n, (0..n).map(|p| {
        let (s, act) = env.pair_of(p);
        env.reward(s, act)
    }));
    let q = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Solver("Bellman system is singular".into()))?;
    let q: Vec<f64> = q.iter().cloned().collect();
    let back = bellman_eval_apply(env, policy, &q);
    let residual = q
        .iter()
        .zip(&back)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    if residual > 1e-10 {
        return Err(Error::Solver(format!(
            "Bellman residual {residual} after direct solve"
        )));
    }
    Ok(q)
}

/// `sum_x mu(x) (qa(x) - qb(x))^2`.
pub fn mu_norm_sq(qa: &[f64], qb: &[f64], mu: &StationaryDist) -> f64 {
    qa.iter()
        .zip(qb)
        .zip(mu.probs())
        .map(|((a, b), &w)| w * (a - b) * (a - b))
        .sum()
}

/// Mean-squared Bellman error of a value table under a policy.
pub fn msbe(env: &FiniteMdp, policy: &Policy, q: &[f64]) -> Result<f64> {
    let mu = stationary_distribution(env, policy)?;
    let t = bellman_eval_apply(env, policy, q);
    Ok(mu_norm_sq(q, &t, &mu))
}

/// Mean-squared projected Bellman error: the target is projected onto the
/// feasible linearized class before the residual is taken.
pub fn mspbe(
    env: &FiniteMdp,
    policy: &Policy,
    q: &[f64],
    feats: &LinearizedFeatures,
    spec: &ProjectionSpec,
) -> Result<f64> {
    let mu = stationary_distribution(env, policy)?;
    let projector = BallProjector::new(feats, mu.probs(), spec.radius());
    let t = bellman_eval_apply(env, policy, q);
    let proj = projector.project(&t);
    Ok(mu_norm_sq(q, &proj.q, &mu))
}
