use crate::env::{FeatureMap, FiniteMdp, Policy, StationaryDist, Transition};
use crate::error::{Error, Result};
use crate::net::TwoLayerParams;
use crate::oracle::LinearizedFeatures;

/// Sparse next-pair and next-state laws precomputed from the environment.
#[derive(Debug, Clone)]
pub struct PairDynamics {
    /// `(s,a) -> [(next_pair, P(s'|s,a) pi(a'|s'))]`, zero-probability entries
    /// dropped.
    pub next_eval: Vec<Vec<(usize, f64)>>,
    /// `(s,a) -> [(s', P(s'|s,a))]`, zero-probability entries dropped.
    pub next_state: Vec<Vec<(usize, f64)>>,
}

impl PairDynamics {
    pub fn new(env: &FiniteMdp, policy: &Policy) -> Self {
        let n_actions = env.n_actions();
        let mut next_eval = Vec::with_capacity(env.n_pairs());
        let mut next_state = Vec::with_capacity(env.n_pairs());
        for p in 0..env.n_pairs() {
            let (s, a) = env.pair_of(p);
            let mut ev = Vec::new();
            let mut st = Vec::new();
            for (s_next, &pr) in env.next_state_row(s, a).iter().enumerate() {
                if pr == 0.0 {
                    continue;
                }
                st.push((s_next, pr));
                for a_next in 0..n_actions {
                    let w = pr * policy.prob(s_next, a_next);
                    if w > 0.0 {
                        ev.push((env.pair_index(s_next, a_next), w));
                    }
                }
            }
            next_eval.push(ev);
            next_state.push(st);
        }
        Self {
            next_eval,
            next_state,
        }
    }

    /// Expected next value under the policy, `E[q(s',a') | s,a]`.
    pub fn expected_next(&self, pair: usize, q: &[f64]) -> f64 {
        self.next_eval[pair].iter().map(|&(p, w)| w * q[p]).sum()
    }
}

/// Temporal-difference residual `Q(x;W) - r - gamma Q(x';W)` of one tuple.
pub fn residual_delta(
    net: &TwoLayerParams,
    fmap: &FeatureMap,
    tuple: &Transition,
    gamma: f64,
    n_actions: usize,
) -> Result<f64> {
    let a_next = tuple.a_next.ok_or_else(|| {
        Error::InvalidArgument("tuple carries no next action for an evaluation residual".into())
    })?;
    let x = fmap.feature(tuple.s * n_actions + tuple.a);
    let x_next = fmap.feature(tuple.s_next * n_actions + a_next);
    Ok(net.forward(x) - tuple.r - gamma * net.forward(x_next))
}

/// Same residual through the locally linearized network.
pub fn residual_delta0(
    net: &TwoLayerParams,
    fmap: &FeatureMap,
    tuple: &Transition,
    gamma: f64,
    n_actions: usize,
) -> Result<f64> {
    let a_next = tuple.a_next.ok_or_else(|| {
        Error::InvalidArgument("tuple carries no next action for an evaluation residual".into())
    })?;
    let x = fmap.feature(tuple.s * n_actions + tuple.a);
    let x_next = fmap.feature(tuple.s_next * n_actions + a_next);
    Ok(net.linearized_forward(net.w(), x) - tuple.r - gamma * net.linearized_forward(net.w(), x_next))
}

/// Stochastic semigradient `delta . grad Q(x;W)` of one tuple, dense.
pub fn semigradient_stochastic(
    net: &TwoLayerParams,
    fmap: &FeatureMap,
    tuple: &Transition,
    gamma: f64,
    n_actions: usize,
) -> Result<Vec<f64>> {
    let delta = residual_delta(net, fmap, tuple, gamma, n_actions)?;
    let x = fmap.feature(tuple.s * n_actions + tuple.a);
    let mut g = net.grad(x);
    g.iter_mut().for_each(|v| *v *= delta);
    Ok(g)
}

/// Population semigradient: the exact expectation of the stochastic one over
/// `(s,a) ~ mu`, `s' ~ P`, `a' ~ pi`, with no sampling.
pub fn semigradient_population(
    net: &TwoLayerParams,
    fmap: &FeatureMap,
    env: &FiniteMdp,
    mu: &StationaryDist,
    policy: &Policy,
) -> Vec<f64> {
    let dyn_ = PairDynamics::new(env, policy);
    let q: Vec<f64> = (0..env.n_pairs())
        .map(|p| net.forward(fmap.feature(p)))
        .collect();
    let mut g = vec![0.0; net.w().len()];
    for p in 0..env.n_pairs() {
        let w = mu.prob(p);
        if w == 0.0 {
            continue;
        }
        let (s, a) = env.pair_of(p);
        let delta_bar = q[p] - env.reward(s, a) - env.gamma() * dyn_.expected_next(p, &q);
        let gp = net.grad(fmap.feature(p));
        for (gi, &v) in g.iter_mut().zip(&gp) {
            *gi += w * delta_bar * v;
        }
    }
    g
}

/// Population semigradient of the locally linearized network: both the values
/// and the gradient use the activation pattern frozen at initialization.
pub fn semigradient_linearized_population(
    feats: &LinearizedFeatures,
    env: &FiniteMdp,
    mu: &StationaryDist,
    policy: &Policy,
    w: &[f64],
) -> Vec<f64> {
    let dyn_ = PairDynamics::new(env, policy);
    let q0 = feats.values(w);
    linearized_population_from_values(feats, env, mu, &dyn_, &q0)
}

/// Same, from a precomputed linearized value table: used to evaluate the
/// semigradient at the oracle fixed point.
pub fn linearized_population_from_values(
    feats: &LinearizedFeatures,
    env: &FiniteMdp,
    mu: &StationaryDist,
    dynamics: &PairDynamics,
    q0: &[f64],
) -> Vec<f64> {
    let mut g = vec![0.0; feats.m() * feats.d()];
    for p in 0..env.n_pairs() {
        let w = mu.prob(p);
        if w == 0.0 {
            continue;
        }
        let (s, a) = env.pair_of(p);
        let delta_bar = q0[p] - env.reward(s, a) - env.gamma() * dynamics.expected_next(p, q0);
        let coeff = w * delta_bar;
        for (gi, &v) in g.iter_mut().zip(feats.phi(p)) {
            *gi += coeff * v;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_random_mdp_with_gamma, sample_iid, stationary_distribution};
    use crate::rng::{step_rng, Stream};

    #[test]
    fn zero_network_residual_is_minus_reward() {
        let (mdp, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 1, 0.9).unwrap();
        let mut net = TwoLayerParams::init(8, 4, 2);
        net.set_w(vec![0.0; 8 * 4]);
        let tuple = Transition {
            s: 0,
            a: 0,
            r: 1.0,
            s_next: 1,
            a_next: Some(0),
        };
        let d = residual_delta(&net, &fmap, &tuple, mdp.gamma(), 2).unwrap();
        assert!((d + 1.0).abs() < 1e-15);
    }

    #[test]
    fn self_loop_residual_scales_by_one_minus_gamma() {
        let (_, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 3, 0.9).unwrap();
        let net = TwoLayerParams::init(16, 4, 4);
        let tuple = Transition {
            s: 2,
            a: 1,
            r: 0.0,
            s_next: 2,
            a_next: Some(1),
        };
        let d = residual_delta(&net, &fmap, &tuple, 0.9, 2).unwrap();
        let q = net.forward(fmap.feature(2 * 2 + 1));
        assert!((d - (1.0 - 0.9) * q).abs() < 1e-14);
    }

    #[test]
    fn hand_evaluated_residual() {
        // two-unit network from the forward test, r = 0.5, gamma = 0.9
        let net = TwoLayerParams::from_parts(
            vec![1.0, -1.0],
            vec![1.0, 0.0, 0.0, -1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, -1.0, 1.0, 0.0],
            3,
        )
        .unwrap();
        let fmap = FeatureMap::new(
            3,
            2,
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        )
        .unwrap();
        let tuple = Transition {
            s: 0,
            a: 0,
            r: 0.5,
            s_next: 1,
            a_next: Some(0),
        };
        // single-action indexing: pair = s
        let d = residual_delta(&net, &fmap, &tuple, 0.9, 1).unwrap();
        let expected = 1.0 / 2.0f64.sqrt() - 0.5 - 0.9 * net.forward(fmap.feature(1));
        assert!((d - expected).abs() < 1e-15);
    }

    #[test]
    fn missing_next_action_is_an_error() {
        let (_, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 5, 0.9).unwrap();
        let net = TwoLayerParams::init(8, 4, 6);
        let tuple = Transition {
            s: 0,
            a: 0,
            r: 0.0,
            s_next: 1,
            a_next: None,
        };
        assert!(residual_delta(&net, &fmap, &tuple, 0.9, 2).is_err());
        assert!(residual_delta0(&net, &fmap, &tuple, 0.9, 2).is_err());
    }

    #[test]
    fn population_gradient_is_zero_at_zero_rewards_and_zero_weights() {
        let (mdp, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 7, 0.9).unwrap();
        let zero_r = FiniteMdp::new(
            3,
            2,
            mdp.transition_tensor().to_vec(),
            vec![0.0; 6],
            0.9,
            1.0,
        )
        .unwrap();
        let mut net = TwoLayerParams::init(8, 4, 8);
        net.set_w(vec![0.0; 32]);
        let pi = Policy::uniform(3, 2);
        let mu = stationary_distribution(&zero_r, &pi).unwrap();
        let g = semigradient_population(&net, &fmap, &zero_r, &mu, &pi);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linearized_population_matches_plain_at_initialization() {
        let (mdp, fmap) = build_random_mdp_with_gamma(4, 2, 5, 2, 9, 0.9).unwrap();
        let net = TwoLayerParams::init(32, 5, 10);
        let pi = Policy::uniform(4, 2);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        let feats = LinearizedFeatures::new(&net, &fmap);
        let g = semigradient_population(&net, &fmap, &mdp, &mu, &pi);
        let g0 = semigradient_linearized_population(&feats, &mdp, &mu, &pi, net.w());
        for (a, b) in g.iter().zip(&g0) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn monte_carlo_mean_of_stochastic_semigradient_matches_population() {
        let (mdp, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 11, 0.8).unwrap();
        let net = TwoLayerParams::init(16, 4, 12);
        let pi = Policy::uniform(3, 2);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        let pop = semigradient_population(&net, &fmap, &mdp, &mu, &pi);

        let n = 200_000usize;
        let dim = net.w().len();
        let mut mean = vec![0.0; dim];
        let mut second = vec![0.0; dim];
        for t in 0..n {
            let mut rng = step_rng(99, Stream::Tuples, t as u64);
            let tuple = sample_iid(&mdp, Some(&pi), &mu, &mut rng);
            let g = semigradient_stochastic(&net, &fmap, &tuple, mdp.gamma(), 2).unwrap();
            for i in 0..dim {
                mean[i] += g[i];
                second[i] += g[i] * g[i];
            }
        }
        for i in 0..dim {
            mean[i] /= n as f64;
            second[i] /= n as f64;
            let var = (second[i] - mean[i] * mean[i]).max(0.0);
            let se = (var / n as f64).sqrt();
            let gap = (mean[i] - pop[i]).abs();
            assert!(
                gap <= 4.0 * se + 1e-12,
                "entry {i}: gap {gap} exceeds 4 se {}",
                4.0 * se
            );
        }
    }
}
