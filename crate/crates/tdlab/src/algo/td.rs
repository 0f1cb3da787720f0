use crate::env::{
    sample_iid, sample_markov, stationary_distribution, FeatureMap, FiniteMdp, Policy,
};
use crate::error::{Error, Result};
use crate::net::{distance, dot, project_ball_in_place, TwoLayerParams};
use crate::oracle::{softmax_value, FixedPoint, LinearizedFeatures};
use crate::rng::{step_rng, Stream};

use super::config::{SamplingMode, SoftConfig, TdConfig};
use super::semigrad::{linearized_population_from_values, PairDynamics};
use super::trace::{AssertionSummary, RunTrace, TraceRow};

/// How the next-state value in the residual target is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
enum TargetRule {
    /// Next action supplied by the sampling policy.
    Evaluation,
    /// Greedy next action under the current network, lowest index on ties.
    Greedy,
    /// Softmax value over next actions at inverse temperature beta.
    Soft(f64),
}

const SLACK_TOL: f64 = 1e-9;
const VARIANCE_SLACK: f64 = 1.10;

/// Policy-evaluation TD with the two-layer network.
pub fn neural_td(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    policy: &Policy,
    net: &TwoLayerParams,
    config: &TdConfig,
) -> Result<RunTrace> {
    run_loop(env, fmap, policy, net, config, TargetRule::Evaluation, None)
}

/// Same loop instrumented against a fixed-point oracle: distances, value
/// gaps, and the monotonicity/descent/variance assertion suites.
pub fn neural_td_with_oracle(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    policy: &Policy,
    net: &TwoLayerParams,
    config: &TdConfig,
    oracle: &FixedPoint,
) -> Result<RunTrace> {
    run_loop(
        env,
        fmap,
        policy,
        net,
        config,
        TargetRule::Evaluation,
        Some(oracle),
    )
}

/// Q-learning: tuples from the exploration policy, greedy next action.
pub fn neural_q_learning(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    pi_exp: &Policy,
    net: &TwoLayerParams,
    config: &TdConfig,
) -> Result<RunTrace> {
    check_exploration(pi_exp)?;
    run_loop(env, fmap, pi_exp, net, config, TargetRule::Greedy, None)
}

pub fn neural_q_learning_with_oracle(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    pi_exp: &Policy,
    net: &TwoLayerParams,
    config: &TdConfig,
    oracle: &FixedPoint,
) -> Result<RunTrace> {
    check_exploration(pi_exp)?;
    run_loop(env, fmap, pi_exp, net, config, TargetRule::Greedy, Some(oracle))
}

/// Soft Q-learning: the greedy target replaced by a softmax value.
pub fn neural_soft_q(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    pi_exp: &Policy,
    net: &TwoLayerParams,
    config: &SoftConfig,
) -> Result<RunTrace> {
    check_exploration(pi_exp)?;
    run_loop(
        env,
        fmap,
        pi_exp,
        net,
        &config.td,
        TargetRule::Soft(config.beta),
        None,
    )
}

pub fn neural_soft_q_with_oracle(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    pi_exp: &Policy,
    net: &TwoLayerParams,
    config: &SoftConfig,
    oracle: &FixedPoint,
) -> Result<RunTrace> {
    check_exploration(pi_exp)?;
    run_loop(
        env,
        fmap,
        pi_exp,
        net,
        &config.td,
        TargetRule::Soft(config.beta),
        Some(oracle),
    )
}

fn check_exploration(pi: &Policy) -> Result<()> {
    if !pi.is_exploration() {
        return Err(Error::Config(
            "exploration policy must put positive mass on every action".into(),
        ));
    }
    Ok(())
}

struct Buffers {
    preacts: Vec<f64>,
    q_table: Vec<f64>,
    q0_table: Vec<f64>,
    delta_bar: Vec<f64>,
    delta_bar0: Vec<f64>,
    gbar: Vec<f64>,
    gbar0: Vec<f64>,
    scratch_pre: Vec<f64>,
}

#[allow(clippy::too_many_lines)]
fn run_loop(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    policy: &Policy,
    net: &TwoLayerParams,
    config: &TdConfig,
    rule: TargetRule,
    oracle: Option<&FixedPoint>,
) -> Result<RunTrace> {
    if env.n_pairs() != fmap.n_pairs() {
        return Err(Error::DimensionMismatch(
            "feature map does not cover the environment's state-action pairs".into(),
        ));
    }
    if net.d() != fmap.d() {
        return Err(Error::DimensionMismatch(
            "network input dimension does not match the feature map".into(),
        ));
    }
    if config.sampling == SamplingMode::Population && rule != TargetRule::Evaluation {
        return Err(Error::Config(
            "population mode is only defined for the evaluation loop".into(),
        ));
    }

    let m = net.m();
    let d = net.d();
    let n = env.n_pairs();
    let n_actions = env.n_actions();
    let gamma = env.gamma();
    let eta = config.effective_eta(gamma);
    let radius = config.spec.radius();
    let stride = config.effective_stride();
    let inv_sqrt_m = net.inv_sqrt_m();
    let signs = net.signs();
    let w0 = net.w0();

    let mu = stationary_distribution(env, policy)?;
    let mu_probs = mu.probs().to_vec();
    let feats = LinearizedFeatures::new(net, fmap);
    let dynamics = PairDynamics::new(env, policy);

    // contiguous feature rows and rewards
    let xs: Vec<f64> = (0..n).flat_map(|p| fmap.feature(p).to_vec()).collect();
    let rewards: Vec<f64> = (0..n)
        .map(|p| {
            let (s, a) = env.pair_of(p);
            env.reward(s, a)
        })
        .collect();
    // |w0_r . x_p| for the flip-fraction metric
    let base_pre_abs: Vec<f64> = (0..n)
        .flat_map(|p| {
            (0..m)
                .map(|r| dot(&w0[r * d..(r + 1) * d], &xs[p * d..(p + 1) * d]).abs())
                .collect::<Vec<_>>()
        })
        .collect();
    let active0: Vec<bool> = (0..n).flat_map(|p| feats.active(p).to_vec()).collect();

    // oracle-derived quantities
    let w_star = oracle.map(|fp| fp.w_star.as_slice());
    let q_star = oracle.map(|fp| fp.q_values.as_slice());
    let gbar0_star: Option<Vec<f64>> = match (oracle, rule) {
        (Some(fp), TargetRule::Evaluation) => Some(linearized_population_from_values(
            &feats,
            env,
            &mu,
            &dynamics,
            &fp.q_values,
        )),
        _ => None,
    };

    // Lemma-2 style variance ceiling, measured at initialization
    let q_init_second: f64 = feats
        .base()
        .iter()
        .zip(&mu_probs)
        .map(|(q, &w)| w * q * q)
        .sum();
    let var_bound = 12.0 * q_init_second + 12.0 * radius * radius + 3.0 * env.r_bar() * env.r_bar();

    let mut w = net.w().to_vec();
    let mut w_bar = w.clone();
    let mut assertions = AssertionSummary {
        ball_worst_margin: f64::INFINITY,
        mono_worst_slack: f64::INFINITY,
        descent_worst_slack: f64::INFINITY,
        ..Default::default()
    };
    let mut rows: Vec<TraceRow> = Vec::with_capacity(config.t - 1);
    let mut buf = Buffers {
        preacts: vec![0.0; n * m],
        q_table: vec![0.0; n],
        q0_table: vec![0.0; n],
        delta_bar: vec![0.0; n],
        delta_bar0: vec![0.0; n],
        gbar: vec![0.0; m * d],
        gbar0: vec![0.0; m * d],
        scratch_pre: vec![0.0; m],
    };

    // Markov burn-in from the fixed start pair
    let mut chain_state = (0usize, 0usize);
    let mut tuple_index = 0u64;
    let burn_in = if config.sampling == SamplingMode::Markov {
        for _ in 0..config.burn_in {
            let mut rng = step_rng(config.seed, Stream::Tuples, tuple_index);
            let (_, next) = sample_markov(chain_state, env, policy, &mut rng);
            chain_state = next;
            tuple_index += 1;
        }
        Some(config.burn_in)
    } else {
        None
    };

    for t in 0..config.t - 1 {
        let heavy = t % stride == 0;
        let mut row = TraceRow {
            t,
            ..Default::default()
        };
        if let Some(ws) = w_star {
            row.dist_to_fixed_point = Some(distance(&w, ws));
        }

        let mut descent_rhs: Option<f64> = None;
        match config.sampling {
            SamplingMode::Population => {
                population_tables(env, &xs, signs, &active0, inv_sqrt_m, &w, &mut buf, rule, &dynamics, &rewards, gamma);
                // population semigradient (the update direction)
                accumulate_semigradient(
                    /*use_init_pattern=*/ false,
                    &buf.preacts,
                    &active0,
                    &buf.delta_bar,
                    &mu_probs,
                    signs,
                    &xs,
                    inv_sqrt_m,
                    m,
                    d,
                    &mut buf.gbar,
                );
                let gbar_norm = dot(&buf.gbar, &buf.gbar).sqrt();
                row.update_norm = gbar_norm;
                row.resid = buf
                    .delta_bar
                    .iter()
                    .zip(&mu_probs)
                    .map(|(dv, &p)| p * dv)
                    .sum();
                if heavy {
                    accumulate_semigradient(
                        true,
                        &buf.preacts,
                        &active0,
                        &buf.delta_bar0,
                        &mu_probs,
                        signs,
                        &xs,
                        inv_sqrt_m,
                        m,
                        d,
                        &mut buf.gbar0,
                    );
                    row.gbar_norm = Some(gbar_norm);
                    fill_heavy_metrics(
                        &mut row,
                        env,
                        &mu_probs,
                        &buf,
                        q_star,
                        &base_pre_abs,
                        &w,
                        w0,
                        m,
                        d,
                        &dynamics,
                        &rewards,
                        gamma,
                        rule,
                        true,
                    );
                    if rule == TargetRule::Evaluation {
                        fill_monotonicity(&mut row, &buf, gbar0_star.as_deref(), &w, w_star, gamma, &mut assertions);
                        if let (Some(dist), Some(q0_gap), Some(gap)) =
                            (row.dist_to_fixed_point, row.q0_gap, row.gbar_gap)
                        {
                            descent_rhs = Some(
                                dist * dist
                                    - (2.0 * eta * (1.0 - gamma) - 8.0 * eta * eta) * q0_gap
                                    + 2.0 * eta * eta * gap * gap
                                    + 2.0 * eta * radius * gap,
                            );
                        }
                        fill_variance(&mut row, env, &mu_probs, &buf, &dynamics, &rewards, gamma, m, &mut assertions, var_bound);
                    }
                }
                for (wi, gi) in w.iter_mut().zip(&buf.gbar) {
                    *wi -= eta * gi;
                }
            }
            SamplingMode::Iid | SamplingMode::Markov => {
                let mut rng = step_rng(config.seed, Stream::Tuples, tuple_index);
                tuple_index += 1;
                let tuple = match config.sampling {
                    SamplingMode::Iid => {
                        let pi_for_tuple = match rule {
                            TargetRule::Evaluation => Some(policy),
                            _ => None,
                        };
                        sample_iid(env, pi_for_tuple, &mu, &mut rng)
                    }
                    SamplingMode::Markov => {
                        let (mut tup, next) = sample_markov(chain_state, env, policy, &mut rng);
                        chain_state = next;
                        if rule != TargetRule::Evaluation {
                            tup.a_next = None;
                        }
                        tup
                    }
                    SamplingMode::Population => unreachable!(),
                };

                if heavy {
                    population_tables(env, &xs, signs, &active0, inv_sqrt_m, &w, &mut buf, rule, &dynamics, &rewards, gamma);
                    accumulate_semigradient(
                        false,
                        &buf.preacts,
                        &active0,
                        &buf.delta_bar,
                        &mu_probs,
                        signs,
                        &xs,
                        inv_sqrt_m,
                        m,
                        d,
                        &mut buf.gbar,
                    );
                    accumulate_semigradient(
                        true,
                        &buf.preacts,
                        &active0,
                        &buf.delta_bar0,
                        &mu_probs,
                        signs,
                        &xs,
                        inv_sqrt_m,
                        m,
                        d,
                        &mut buf.gbar0,
                    );
                    row.gbar_norm = Some(dot(&buf.gbar, &buf.gbar).sqrt());
                    fill_heavy_metrics(
                        &mut row,
                        env,
                        &mu_probs,
                        &buf,
                        q_star,
                        &base_pre_abs,
                        &w,
                        w0,
                        m,
                        d,
                        &dynamics,
                        &rewards,
                        gamma,
                        rule,
                        true,
                    );
                    if rule == TargetRule::Evaluation {
                        fill_monotonicity(&mut row, &buf, gbar0_star.as_deref(), &w, w_star, gamma, &mut assertions);
                        fill_variance(&mut row, env, &mu_probs, &buf, &dynamics, &rewards, gamma, m, &mut assertions, var_bound);
                    }
                }

                // current-pair value and active set
                let pair = env.pair_index(tuple.s, tuple.a);
                let x = &xs[pair * d..(pair + 1) * d];
                let mut q_x = 0.0;
                let mut active_count = 0usize;
                for r in 0..m {
                    let pre = dot(&w[r * d..(r + 1) * d], x);
                    buf.scratch_pre[r] = pre;
                    if pre > 0.0 {
                        q_x += signs[r] * pre;
                        active_count += 1;
                    }
                }
                q_x *= inv_sqrt_m;

                let next_value = match rule {
                    TargetRule::Evaluation => {
                        let a_next = tuple.a_next.ok_or_else(|| {
                            Error::InvalidArgument(
                                "evaluation update requires a next action in the tuple".into(),
                            )
                        })?;
                        value_at_pair(&w, signs, inv_sqrt_m, &xs, m, d, env.pair_index(tuple.s_next, a_next))
                    }
                    TargetRule::Greedy => {
                        let (_, best) = greedy_action(&w, signs, inv_sqrt_m, &xs, m, d, n_actions, tuple.s_next);
                        best
                    }
                    TargetRule::Soft(beta) => {
                        let vals: Vec<f64> = (0..n_actions)
                            .map(|a| {
                                value_at_pair(&w, signs, inv_sqrt_m, &xs, m, d, env.pair_index(tuple.s_next, a))
                            })
                            .collect();
                        softmax_value(beta, &vals)
                    }
                };
                let delta = q_x - tuple.r - gamma * next_value;
                row.resid = delta;
                row.update_norm = delta.abs() * (active_count as f64 / m as f64).sqrt();

                let step = eta * delta * inv_sqrt_m;
                if step != 0.0 {
                    for r in 0..m {
                        if buf.scratch_pre[r] > 0.0 {
                            let c = step * signs[r];
                            for (wi, &xi) in w[r * d..(r + 1) * d].iter_mut().zip(x) {
                                *wi -= c * xi;
                            }
                        }
                    }
                }
            }
        }

        project_ball_in_place(&mut w, w0, radius);
        let margin = radius - distance(&w, w0);
        assertions.ball_checked += 1;
        assertions.ball_worst_margin = assertions.ball_worst_margin.min(margin);
        if margin < -SLACK_TOL {
            assertions.ball_failures += 1;
        }

        if let (Some(rhs), Some(ws)) = (descent_rhs, w_star) {
            let dist_after = distance(&w, ws);
            let lhs = dist_after * dist_after;
            row.descent_lhs = Some(lhs);
            row.descent_rhs = Some(rhs);
            let slack = rhs - lhs;
            assertions.descent_checked += 1;
            assertions.descent_worst_slack = assertions.descent_worst_slack.min(slack);
            if slack < -SLACK_TOL {
                assertions.descent_failures += 1;
            }
        }

        let c_old = (t + 1) as f64 / (t + 2) as f64;
        let c_new = 1.0 / (t + 2) as f64;
        for (bi, &wi) in w_bar.iter_mut().zip(&w) {
            *bi = c_old * *bi + c_new * wi;
        }
        rows.push(row);
    }

    // output function and final metrics
    let q_out: Vec<f64> = (0..n)
        .map(|p| value_at_pair(&w_bar, signs, inv_sqrt_m, &xs, m, d, p))
        .collect();
    let final_q0_gap = q_star.map(|qs| {
        q_out
            .iter()
            .zip(qs)
            .zip(&mu_probs)
            .map(|((a, b), &p)| p * (a - b) * (a - b))
            .sum()
    });

    Ok(RunTrace {
        rows,
        w_bar,
        w_final: w,
        q_out,
        final_q0_gap,
        eta,
        seed: config.seed,
        burn_in,
        var_bound: Some(var_bound),
        assertions,
        pi_out: None,
        j_out: None,
    })
}

fn value_at_pair(
    w: &[f64],
    signs: &[f64],
    inv_sqrt_m: f64,
    xs: &[f64],
    m: usize,
    d: usize,
    pair: usize,
) -> f64 {
    let x = &xs[pair * d..(pair + 1) * d];
    let mut acc = 0.0;
    for r in 0..m {
        let pre = dot(&w[r * d..(r + 1) * d], x);
        if pre > 0.0 {
            acc += signs[r] * pre;
        }
    }
    acc * inv_sqrt_m
}

/// Greedy action at a state under the current network; ties break toward the
/// lowest action index. Returns `(action, value)`.
fn greedy_action(
    w: &[f64],
    signs: &[f64],
    inv_sqrt_m: f64,
    xs: &[f64],
    m: usize,
    d: usize,
    n_actions: usize,
    state: usize,
) -> (usize, f64) {
    let mut best_a = 0;
    let mut best_v = f64::NEG_INFINITY;
    for a in 0..n_actions {
        let v = value_at_pair(w, signs, inv_sqrt_m, xs, m, d, state * n_actions + a);
        if v > best_v {
            best_v = v;
            best_a = a;
        }
    }
    (best_a, best_v)
}

/// Fill `preacts`, the true/linearized value tables, and the expected
/// residual tables for the current rule.
#[allow(clippy::too_many_arguments)]
fn population_tables(
    env: &FiniteMdp,
    xs: &[f64],
    signs: &[f64],
    active0: &[bool],
    inv_sqrt_m: f64,
    w: &[f64],
    buf: &mut Buffers,
    rule: TargetRule,
    dynamics: &PairDynamics,
    rewards: &[f64],
    gamma: f64,
) {
    let n = env.n_pairs();
    let n_actions = env.n_actions();
    let m = signs.len();
    let d = xs.len() / n;
    for p in 0..n {
        let x = &xs[p * d..(p + 1) * d];
        let mut q = 0.0;
        let mut q0 = 0.0;
        for r in 0..m {
            let pre = dot(&w[r * d..(r + 1) * d], x);
            buf.preacts[p * m + r] = pre;
            if pre > 0.0 {
                q += signs[r] * pre;
            }
            if active0[p * m + r] {
                q0 += signs[r] * pre;
            }
        }
        buf.q_table[p] = q * inv_sqrt_m;
        buf.q0_table[p] = q0 * inv_sqrt_m;
    }
    // expected residuals under the rule, for both value tables
    let state_value = |q: &[f64], s: usize| -> f64 {
        match rule {
            TargetRule::Evaluation => unreachable!("evaluation targets use pair weights"),
            TargetRule::Greedy => q[s * n_actions..(s + 1) * n_actions]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max),
            TargetRule::Soft(beta) => softmax_value(beta, &q[s * n_actions..(s + 1) * n_actions]),
        }
    };
    for p in 0..n {
        let (next, next0) = match rule {
            TargetRule::Evaluation => (
                dynamics.expected_next(p, &buf.q_table),
                dynamics.expected_next(p, &buf.q0_table),
            ),
            _ => {
                let mut acc = 0.0;
                let mut acc0 = 0.0;
                for &(s_next, pr) in &dynamics.next_state[p] {
                    acc += pr * state_value(&buf.q_table, s_next);
                    acc0 += pr * state_value(&buf.q0_table, s_next);
                }
                (acc, acc0)
            }
        };
        buf.delta_bar[p] = buf.q_table[p] - rewards[p] - gamma * next;
        buf.delta_bar0[p] = buf.q0_table[p] - rewards[p] - gamma * next0;
    }
}

/// `out = sum_p mu_p delta_p grad(p)`, where the activation pattern is either
/// the current one (`preacts > 0`) or the frozen initial one.
#[allow(clippy::too_many_arguments)]
fn accumulate_semigradient(
    use_init_pattern: bool,
    preacts: &[f64],
    active0: &[bool],
    delta: &[f64],
    mu: &[f64],
    signs: &[f64],
    xs: &[f64],
    inv_sqrt_m: f64,
    m: usize,
    d: usize,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (p, (&dp, &mup)) in delta.iter().zip(mu).enumerate() {
        let coeff = mup * dp * inv_sqrt_m;
        if coeff == 0.0 {
            continue;
        }
        let x = &xs[p * d..(p + 1) * d];
        for r in 0..m {
            let on = if use_init_pattern {
                active0[p * m + r]
            } else {
                preacts[p * m + r] > 0.0
            };
            if on {
                let c = coeff * signs[r];
                for (oi, &xi) in out[r * d..(r + 1) * d].iter_mut().zip(x) {
                    *oi += c * xi;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn fill_heavy_metrics(
    row: &mut TraceRow,
    env: &FiniteMdp,
    mu: &[f64],
    buf: &Buffers,
    q_star: Option<&[f64]>,
    base_pre_abs: &[f64],
    w: &[f64],
    w0: &[f64],
    m: usize,
    d: usize,
    dynamics: &PairDynamics,
    rewards: &[f64],
    gamma: f64,
    rule: TargetRule,
    with_gap: bool,
) {
    let n = env.n_pairs();
    let n_actions = env.n_actions();
    if let Some(qs) = q_star {
        row.q0_gap = Some(weighted_sq_gap(&buf.q0_table, qs, mu));
        row.true_gap = Some(weighted_sq_gap(&buf.q_table, qs, mu));
    }
    row.lin_err = Some(weighted_sq_gap(&buf.q_table, &buf.q0_table, mu));
    row.resid_mean = Some(
        buf.delta_bar
            .iter()
            .zip(mu)
            .map(|(dv, &p)| p * dv)
            .sum(),
    );

    // second moment of the per-tuple residual
    let mut second = 0.0;
    for p in 0..n {
        if mu[p] == 0.0 {
            continue;
        }
        let head = buf.q_table[p] - rewards[p];
        let acc: f64 = match rule {
            TargetRule::Evaluation => dynamics.next_eval[p]
                .iter()
                .map(|&(p2, pr)| {
                    let dlt = head - gamma * buf.q_table[p2];
                    pr * dlt * dlt
                })
                .sum(),
            TargetRule::Greedy | TargetRule::Soft(_) => dynamics.next_state[p]
                .iter()
                .map(|&(s2, pr)| {
                    let rowv = &buf.q_table[s2 * n_actions..(s2 + 1) * n_actions];
                    let v = match rule {
                        TargetRule::Greedy => rowv.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                        TargetRule::Soft(beta) => softmax_value(beta, rowv),
                        TargetRule::Evaluation => unreachable!(),
                    };
                    let dlt = head - gamma * v;
                    pr * dlt * dlt
                })
                .sum(),
        };
        second += mu[p] * acc;
    }
    row.resid_second = Some(second);

    // mu-weighted activation flip fraction
    let mut flip = 0.0;
    let row_disp: Vec<f64> = (0..m)
        .map(|r| distance(&w[r * d..(r + 1) * d], &w0[r * d..(r + 1) * d]))
        .collect();
    for p in 0..n {
        if mu[p] == 0.0 {
            continue;
        }
        let mut count = 0usize;
        for r in 0..m {
            if base_pre_abs[p * m + r] <= row_disp[r] {
                count += 1;
            }
        }
        flip += mu[p] * count as f64 / m as f64;
    }
    row.flip_fraction = Some(flip);

    if with_gap {
        row.gbar0_norm = Some(dot(&buf.gbar0, &buf.gbar0).sqrt());
        let gap_sq: f64 = buf
            .gbar
            .iter()
            .zip(&buf.gbar0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        row.gbar_gap = Some(gap_sq.sqrt());
    }
}

fn weighted_sq_gap(a: &[f64], b: &[f64], mu: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mu)
        .map(|((x, y), &p)| p * (x - y) * (x - y))
        .sum()
}

fn fill_monotonicity(
    row: &mut TraceRow,
    buf: &Buffers,
    gbar0_star: Option<&[f64]>,
    w: &[f64],
    w_star: Option<&[f64]>,
    gamma: f64,
    assertions: &mut AssertionSummary,
) {
    let (Some(g0s), Some(ws)) = (gbar0_star, w_star) else {
        return;
    };
    let Some(q0_gap) = row.q0_gap else { return };
    let lhs: f64 = buf
        .gbar0
        .iter()
        .zip(g0s)
        .zip(w.iter().zip(ws))
        .map(|((g, gs), (wi, wsi))| (g - gs) * (wi - wsi))
        .sum();
    let rhs = (1.0 - gamma) * q0_gap;
    row.mono_lhs = Some(lhs);
    row.mono_rhs = Some(rhs);
    let slack = lhs - rhs;
    assertions.mono_checked += 1;
    assertions.mono_worst_slack = assertions.mono_worst_slack.min(slack);
    if slack < -SLACK_TOL {
        assertions.mono_failures += 1;
    }
}

/// Exact variance of the stochastic semigradient at the current iterate:
/// `E||g||^2 - ||gbar||^2`, with `E||g||^2` summed over the tuple law.
#[allow(clippy::too_many_arguments)]
fn fill_variance(
    row: &mut TraceRow,
    env: &FiniteMdp,
    mu: &[f64],
    buf: &Buffers,
    dynamics: &PairDynamics,
    rewards: &[f64],
    gamma: f64,
    m: usize,
    assertions: &mut AssertionSummary,
    var_bound: f64,
) {
    let n = env.n_pairs();
    let mut second = 0.0;
    for p in 0..n {
        if mu[p] == 0.0 {
            continue;
        }
        let active = (0..m).filter(|&r| buf.preacts[p * m + r] > 0.0).count();
        let grad_sq = active as f64 / m as f64;
        let head = buf.q_table[p] - rewards[p];
        let exp_delta_sq: f64 = dynamics.next_eval[p]
            .iter()
            .map(|&(p2, pr)| {
                let dlt = head - gamma * buf.q_table[p2];
                pr * dlt * dlt
            })
            .sum();
        second += mu[p] * grad_sq * exp_delta_sq;
    }
    let gbar_sq = dot(&buf.gbar, &buf.gbar);
    let var = (second - gbar_sq).max(0.0);
    row.var_g = Some(var);
    assertions.variance_checked += 1;
    let ratio = var / var_bound;
    assertions.variance_worst_ratio = assertions.variance_worst_ratio.max(ratio);
    if var > var_bound * VARIANCE_SLACK {
        assertions.variance_failures += 1;
    }
}
