use crate::env::{
    sample_iid, stationary_distribution, FeatureMap, FiniteMdp, Policy,
};
use crate::error::{Error, Result};
use crate::net::{distance, dot, project_ball_in_place, TwoLayerParams};
use crate::oracle::q_pi_exact;
use crate::rng::{step_rng, Stream};

use super::config::SoftConfig;
use super::trace::{AssertionSummary, RunTrace, TraceRow};

/// Expected discounted return of a policy, with the start state drawn from
/// the policy's own stationary distribution.
pub fn expected_return(env: &FiniteMdp, policy: &Policy) -> Result<f64> {
    let q = q_pi_exact(env, policy)?;
    let mu = stationary_distribution(env, policy)?;
    let mu_state = mu.state_marginal(env.n_actions());
    let j = (0..env.n_states())
        .map(|s| {
            let v: f64 = (0..env.n_actions())
                .map(|a| policy.prob(s, a) * q[env.pair_index(s, a)])
                .sum();
            mu_state[s] * v
        })
        .sum();
    Ok(j)
}

/// Boltzmann policy `pi(a|s) proportional to ref(a|s) exp(beta q(s,a))`.
pub fn boltzmann_policy(
    reference: &Policy,
    beta: f64,
    q_table: &[f64],
    n_states: usize,
    n_actions: usize,
) -> Result<Policy> {
    let mut probs = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        let row = &q_table[s * n_actions..(s + 1) * n_actions];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for a in 0..n_actions {
            let w = reference.prob(s, a) * ((row[a] - max) * beta).exp();
            probs[s * n_actions + a] = w;
            total += w;
        }
        for a in 0..n_actions {
            probs[s * n_actions + a] /= total;
        }
    }
    Policy::new(n_states, n_actions, probs)
}

/// Log-partition value table `v(s) = beta^{-1} log E_{a~ref}[exp(beta q)]`.
pub fn soft_value_table(
    reference: &Policy,
    beta: f64,
    q_table: &[f64],
    n_states: usize,
    n_actions: usize,
) -> Vec<f64> {
    (0..n_states)
        .map(|s| {
            let row = &q_table[s * n_actions..(s + 1) * n_actions];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..n_actions)
                .map(|a| reference.prob(s, a) * ((row[a] - max) * beta).exp())
                .sum();
            max + sum.ln() / beta
        })
        .collect()
}

/// KL-regularized actor-critic with a Boltzmann actor tied to the critic.
///
/// Per iteration: rebuild the Boltzmann policy from the current critic,
/// resolve its stationary distribution exactly, draw one tuple from it,
/// regularize the reward by the KL against the uniform reference, and apply
/// the actor and critic updates before projecting and averaging. A policy
/// whose chain stops mixing aborts the run with a diagnostic.
pub fn soft_actor_critic(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    net: &TwoLayerParams,
    config: &SoftConfig,
) -> Result<RunTrace> {
    if env.n_pairs() != fmap.n_pairs() || net.d() != fmap.d() {
        return Err(Error::DimensionMismatch(
            "environment, feature map, and network shapes disagree".into(),
        ));
    }
    let beta = config.beta;
    let n_states = env.n_states();
    let n_actions = env.n_actions();
    let n = env.n_pairs();
    let m = net.m();
    let d = net.d();
    let gamma = env.gamma();
    let eta = config.td.effective_eta(gamma);
    let radius = config.td.spec.radius();
    let seed = config.td.seed;
    let inv_sqrt_m = net.inv_sqrt_m();
    let signs = net.signs();
    let w0 = net.w0();
    let reference = Policy::uniform(n_states, n_actions);

    let xs: Vec<f64> = (0..n).flat_map(|p| fmap.feature(p).to_vec()).collect();
    let mut w = net.w().to_vec();
    let mut w_bar = w.clone();
    let mut rows = Vec::with_capacity(config.td.t - 1);
    let mut assertions = AssertionSummary {
        ball_worst_margin: f64::INFINITY,
        mono_worst_slack: f64::INFINITY,
        descent_worst_slack: f64::INFINITY,
        ..Default::default()
    };
    let mut dw = vec![0.0; m * d];

    for t in 0..config.td.t - 1 {
        let q_table: Vec<f64> = (0..n)
            .map(|p| {
                let x = &xs[p * d..(p + 1) * d];
                let mut acc = 0.0;
                for r in 0..m {
                    let pre = dot(&w[r * d..(r + 1) * d], x);
                    if pre > 0.0 {
                        acc += signs[r] * pre;
                    }
                }
                acc * inv_sqrt_m
            })
            .collect();
        let pi_t = boltzmann_policy(&reference, beta, &q_table, n_states, n_actions)?;
        let mu_t = stationary_distribution(env, &pi_t).map_err(|e| {
            Error::ChainNotMixing(format!("actor policy chain at iteration {t}: {e}"))
        })?;
        let v_table = soft_value_table(&reference, beta, &q_table, n_states, n_actions);

        let mut rng = step_rng(seed, Stream::Tuples, t as u64);
        let tuple = sample_iid(env, None, &mu_t, &mut rng);
        let s = tuple.s;

        // KL(pi_t(.|s) || ref(.|s)) and the regularized residual
        let dkl: f64 = (0..n_actions)
            .map(|a| {
                let p = pi_t.prob(s, a);
                if p > 0.0 {
                    p * (p / reference.prob(s, a)).ln()
                } else {
                    0.0
                }
            })
            .sum();
        let r_kl = tuple.r - dkl / beta;
        let xi = r_kl + gamma * v_table[tuple.s_next] - v_table[s];

        // actor update through log pi_t and the KL gradient, critic through
        // the log-partition gradient; everything reduces to per-action
        // coefficients on grad Q(s, a')
        let mut coeff = vec![0.0; n_actions];
        for a2 in 0..n_actions {
            let p = pi_t.prob(s, a2);
            let log_ratio = if p > 0.0 {
                (p / reference.prob(s, a2)).ln()
            } else {
                0.0
            };
            let c_logpi = beta * ((a2 == tuple.a) as u8 as f64 - p);
            let c_dkl = beta * p * (log_ratio - dkl);
            let c_v = p;
            coeff[a2] = eta * (xi * c_logpi / beta - c_dkl / (beta * beta) + xi * c_v);
        }
        dw.iter_mut().for_each(|v| *v = 0.0);
        for (a2, &c) in coeff.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let pair = env.pair_index(s, a2);
            let x = &xs[pair * d..(pair + 1) * d];
            for r in 0..m {
                if dot(&w[r * d..(r + 1) * d], x) > 0.0 {
                    let cc = c * signs[r] * inv_sqrt_m;
                    for (di, &xi_) in dw[r * d..(r + 1) * d].iter_mut().zip(x) {
                        *di += cc * xi_;
                    }
                }
            }
        }
        for (wi, &di) in w.iter_mut().zip(&dw) {
            *wi += di;
        }

        project_ball_in_place(&mut w, w0, radius);
        let margin = radius - distance(&w, w0);
        assertions.ball_checked += 1;
        assertions.ball_worst_margin = assertions.ball_worst_margin.min(margin);
        if margin < -1e-9 {
            assertions.ball_failures += 1;
        }

        let c_old = (t + 1) as f64 / (t + 2) as f64;
        let c_new = 1.0 / (t + 2) as f64;
        for (bi, &wi) in w_bar.iter_mut().zip(&w) {
            *bi = c_old * *bi + c_new * wi;
        }

        rows.push(TraceRow {
            t,
            resid: xi,
            update_norm: dot(&dw, &dw).sqrt(),
            ..Default::default()
        });
    }

    let q_out: Vec<f64> = (0..n)
        .map(|p| {
            let x = &xs[p * d..(p + 1) * d];
            let mut acc = 0.0;
            for r in 0..m {
                let pre = dot(&w_bar[r * d..(r + 1) * d], x);
                if pre > 0.0 {
                    acc += signs[r] * pre;
                }
            }
            acc * inv_sqrt_m
        })
        .collect();
    let pi_out = boltzmann_policy(&reference, beta, &q_out, n_states, n_actions)?;
    let j_out = expected_return(env, &pi_out)?;

    Ok(RunTrace {
        rows,
        w_bar,
        w_final: w,
        q_out,
        final_q0_gap: None,
        eta,
        seed,
        burn_in: None,
        var_bound: None,
        assertions,
        pi_out: Some(pi_out),
        j_out: Some(j_out),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::config::{SamplingMode, TdConfig};
    use crate::env::build_random_mdp_with_gamma;
    use crate::net::ProjectionSpec;
    use rand::Rng;

    #[test]
    fn geometric_series_return() {
        let mdp = FiniteMdp::new(1, 1, vec![1.0], vec![1.0], 0.5, 1.0).unwrap();
        let j = expected_return(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert!((j - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_return_zero() {
        let (mdp, _) = build_random_mdp_with_gamma(4, 2, 4, 2, 2, 0.9).unwrap();
        let zero = FiniteMdp::new(
            4,
            2,
            mdp.transition_tensor().to_vec(),
            vec![0.0; 8],
            0.9,
            1.0,
        )
        .unwrap();
        assert!(expected_return(&zero, &Policy::uniform(4, 2)).unwrap().abs() < 1e-13);
    }

    #[test]
    fn return_matches_monte_carlo_rollouts() {
        let (mdp, _) = build_random_mdp_with_gamma(4, 2, 4, 2, 31, 0.9).unwrap();
        let pi = Policy::uniform(4, 2);
        let exact = expected_return(&mdp, &pi).unwrap();
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        let mu_state = mu.state_marginal(2);
        let horizon = ((1e-6f64).ln() / 0.9f64.ln()).ceil() as usize;
        let n_rollouts = 100_000;
        let mut rng = crate::rng::stream_rng(5, Stream::Aux);
        let draw = |row: &[f64], rng: &mut rand_chacha::ChaCha12Rng| -> usize {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            row.len() - 1
        };
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n_rollouts {
            let mut s = draw(&mu_state, &mut rng);
            let mut g = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                let a = draw(pi.row(s), &mut rng);
                g += disc * mdp.reward(s, a);
                disc *= mdp.gamma();
                s = draw(mdp.next_state_row(s, a), &mut rng);
            }
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / n_rollouts as f64;
        let var = (sum_sq / n_rollouts as f64 - mean * mean).max(0.0);
        let se = (var / n_rollouts as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se + 1e-9,
            "MC {mean} vs exact {exact}, se {se}"
        );
    }

    #[test]
    fn tiny_beta_flattens_the_actor_to_uniform() {
        let (mdp, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 7, 0.9).unwrap();
        let net = TwoLayerParams::init(16, 4, 8);
        let q: Vec<f64> = (0..mdp.n_pairs())
            .map(|p| net.forward(fmap.feature(p)))
            .collect();
        let reference = Policy::uniform(3, 2);
        let pi = boltzmann_policy(&reference, 1e-6, &q, 3, 2).unwrap();
        for s in 0..3 {
            let tv: f64 = 0.5
                * (0..2)
                    .map(|a| (pi.prob(s, a) - 0.5).abs())
                    .sum::<f64>();
            assert!(tv < 1e-4, "state {s} tv {tv}");
        }
    }

    #[test]
    fn soft_value_dominates_reference_average() {
        let (mdp, fmap) = build_random_mdp_with_gamma(4, 3, 4, 2, 9, 0.9).unwrap();
        let net = TwoLayerParams::init(24, 4, 10);
        let q: Vec<f64> = (0..mdp.n_pairs())
            .map(|p| net.forward(fmap.feature(p)))
            .collect();
        let reference = Policy::uniform(4, 3);
        for &beta in &[0.5, 2.0, 30.0] {
            let v = soft_value_table(&reference, beta, &q, 4, 3);
            for s in 0..4 {
                let avg: f64 = (0..3).map(|a| q[s * 3 + a] / 3.0).sum();
                assert!(v[s] >= avg - 1e-12, "Jensen violated at state {s}");
            }
        }
    }

    #[test]
    fn single_pair_residual_matches_hand_formula() {
        // one state, one action: KL term vanishes and xi = r + (gamma-1) v(s)
        let mdp = FiniteMdp::new(1, 1, vec![1.0], vec![0.7], 0.6, 1.0).unwrap();
        let fmap = FeatureMap::new(3, 1, vec![1.0, 0.0, 0.0]).unwrap();
        let net = TwoLayerParams::init(8, 3, 11);
        let td = TdConfig::new(2, ProjectionSpec::new(1.0).unwrap(), SamplingMode::Iid, 5)
            .unwrap()
            .with_eta(0.1)
            .unwrap();
        let trace =
            soft_actor_critic(&mdp, &fmap, &net, &SoftConfig::new(2.0, td).unwrap()).unwrap();
        let v = net.forward(fmap.feature(0)); // softmax over one action is identity
        let expect = 0.7 + (0.6 - 1.0) * v;
        assert!((trace.rows[0].resid - expect).abs() < 1e-12);
    }

    #[test]
    fn collapsed_update_matches_explicit_actor_critic_gradients() {
        let (mdp, fmap) = build_random_mdp_with_gamma(3, 2, 4, 3, 13, 0.9).unwrap();
        let net = TwoLayerParams::init(12, 4, 14);
        let beta = 1.5;
        let eta = 0.05;
        let seed = 77;
        let td = TdConfig::new(2, ProjectionSpec::new(10.0).unwrap(), SamplingMode::Iid, seed)
            .unwrap()
            .with_eta(eta)
            .unwrap();
        let trace =
            soft_actor_critic(&mdp, &fmap, &net, &SoftConfig::new(beta, td).unwrap()).unwrap();

        // independent route: materialize each named gradient
        let reference = Policy::uniform(3, 2);
        let q: Vec<f64> = (0..mdp.n_pairs())
            .map(|p| net.forward(fmap.feature(p)))
            .collect();
        let pi_t = boltzmann_policy(&reference, beta, &q, 3, 2).unwrap();
        let mu_t = stationary_distribution(&mdp, &pi_t).unwrap();
        let v = soft_value_table(&reference, beta, &q, 3, 2);
        let mut rng = step_rng(seed, Stream::Tuples, 0);
        let tuple = sample_iid(&mdp, None, &mu_t, &mut rng);
        let s = tuple.s;
        let dim = net.w().len();

        let grad_a: Vec<Vec<f64>> = (0..2)
            .map(|a| net.grad(fmap.feature(mdp.pair_index(s, a))))
            .collect();
        let mut grad_v = vec![0.0; dim];
        for a in 0..2 {
            for i in 0..dim {
                grad_v[i] += pi_t.prob(s, a) * grad_a[a][i];
            }
        }
        let dkl: f64 = (0..2)
            .map(|a| {
                let p = pi_t.prob(s, a);
                p * (p / 0.5).ln()
            })
            .sum();
        let xi = tuple.r - dkl / beta + mdp.gamma() * v[tuple.s_next] - v[s];
        let grad_logpi: Vec<f64> = (0..dim)
            .map(|i| beta * (grad_a[tuple.a][i] - grad_v[i]))
            .collect();
        let mut grad_dkl = vec![0.0; dim];
        for a in 0..2 {
            let p = pi_t.prob(s, a);
            let lr = (p / 0.5).ln();
            for i in 0..dim {
                grad_dkl[i] += p * lr * beta * (grad_a[a][i] - grad_v[i]);
            }
        }
        let mut expected = net.w().to_vec();
        for i in 0..dim {
            expected[i] += eta * (xi * grad_logpi[i] / beta - grad_dkl[i] / (beta * beta));
            expected[i] += eta * xi * grad_v[i];
        }
        for (a, b) in trace.w_final.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(trace.pi_out.is_some() && trace.j_out.is_some());
    }
}
