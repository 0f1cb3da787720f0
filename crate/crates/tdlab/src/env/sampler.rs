use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::mdp::{FiniteMdp, Policy, StationaryDist, Transition};
use crate::error::{Error, Result};

/// Draw an index from a probability row by inverse-CDF scan.
pub(crate) fn draw_categorical(row: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// One application of the state-action chain map:
/// `out[(s',a')] = sum_{s,a} dist[(s,a)] P(s'|s,a) pi(a'|s')`.
pub(crate) fn pair_chain_step(mdp: &FiniteMdp, policy: &Policy, dist: &[f64], out: &mut [f64]) {
    let n_actions = mdp.n_actions();
    out.iter_mut().for_each(|v| *v = 0.0);
    for s in 0..mdp.n_states() {
        for a in 0..n_actions {
            let mass = dist[mdp.pair_index(s, a)];
            if mass == 0.0 {
                continue;
            }
            let row = mdp.next_state_row(s, a);
            for (s_next, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let w = mass * p;
                for a_next in 0..n_actions {
                    out[mdp.pair_index(s_next, a_next)] += w * policy.prob(s_next, a_next);
                }
            }
        }
    }
}

fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub(crate) const STATIONARY_TOL: f64 = 1e-12;
pub(crate) const STATIONARY_MAX_ITERS: usize = 100_000;

/// Stationary distribution of the state-action chain induced by `policy`,
/// by power iteration from the uniform distribution.
pub fn stationary_distribution(mdp: &FiniteMdp, policy: &Policy) -> Result<StationaryDist> {
    let n = mdp.n_pairs();
    let mut dist = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..STATIONARY_MAX_ITERS {
        pair_chain_step(mdp, policy, &dist, &mut next);
        // renormalize to absorb accumulated round-off
        let sum: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        let tv = total_variation(&dist, &next);
        std::mem::swap(&mut dist, &mut next);
        if tv < STATIONARY_TOL {
            // balance residual check before handing the result out
            pair_chain_step(mdp, policy, &dist, &mut next);
            let residual = total_variation(&dist, &next);
            if residual > 1e-8 {
                return Err(Error::ChainNotMixing(format!(
                    "balance residual {residual} after convergence"
                )));
            }
            return Ok(StationaryDist::from_validated(dist));
        }
    }
    Err(Error::ChainNotMixing(format!(
        "power iteration did not reach tolerance {STATIONARY_TOL} in {STATIONARY_MAX_ITERS} iterations"
    )))
}

/// Sample one transition with `(s,a) ~ mu`, `s' ~ P(.|s,a)`.
///
/// When a policy is supplied the next action is drawn from it; otherwise
/// `a_next` is left empty for learners that pick their own next action.
pub fn sample_iid(
    mdp: &FiniteMdp,
    policy: Option<&Policy>,
    mu: &StationaryDist,
    rng: &mut ChaCha12Rng,
) -> Transition {
    let pair = draw_categorical(mu.probs(), rng);
    let (s, a) = mdp.pair_of(pair);
    let s_next = draw_categorical(mdp.next_state_row(s, a), rng);
    let a_next = policy.map(|pi| draw_categorical(pi.row(s_next), rng));
    Transition {
        s,
        a,
        r: mdp.reward(s, a),
        s_next,
        a_next,
    }
}

/// Advance the state-action chain one step from `state`, emitting the
/// transition rooted there. The returned pair is the chain state for the next
/// call, so consecutive transitions satisfy `t.s_next == t_next.s`.
pub fn sample_markov(
    state: (usize, usize),
    mdp: &FiniteMdp,
    policy: &Policy,
    rng: &mut ChaCha12Rng,
) -> (Transition, (usize, usize)) {
    let (s, a) = state;
    let s_next = draw_categorical(mdp.next_state_row(s, a), rng);
    let a_next = draw_categorical(policy.row(s_next), rng);
    let t = Transition {
        s,
        a,
        r: mdp.reward(s, a),
        s_next,
        a_next: Some(a_next),
    };
    (t, (s_next, a_next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{step_rng, stream_rng, Stream};

    fn one_state() -> FiniteMdp {
        FiniteMdp::new(1, 1, vec![1.0], vec![0.5], 0.5, 1.0).unwrap()
    }

    fn cycle() -> FiniteMdp {
        FiniteMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.3, -0.7], 0.9, 1.0).unwrap()
    }

    #[test]
    fn stationary_single_pair_is_delta() {
        let mdp = one_state();
        let pi = Policy::uniform(1, 1);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        assert_eq!(mu.probs(), &[1.0]);
    }

    #[test]
    fn stationary_cycle_is_half_half() {
        let mdp = cycle();
        let pi = Policy::uniform(2, 1);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        assert!((mu.prob(0) - 0.5).abs() < 1e-12);
        assert!((mu.prob(1) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stationary_is_fixed_point_of_chain_map() {
        let (mdp, _) = crate::env::build_random_mdp(3, 2, 4, 2, 99).unwrap();
        let pi = Policy::uniform(3, 2);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        let mut next = vec![0.0; mdp.n_pairs()];
        pair_chain_step(&mdp, &pi, mu.probs(), &mut next);
        assert!(total_variation(mu.probs(), &next) < 1e-8);
    }

    #[test]
    fn iid_sampler_is_deterministic_given_seed() {
        let (mdp, _) = crate::env::build_random_mdp(4, 2, 4, 2, 5).unwrap();
        let pi = Policy::uniform(4, 2);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        let draw = |seed| {
            (0..64)
                .map(|t| {
                    let mut rng = step_rng(seed, Stream::Tuples, t);
                    sample_iid(&mdp, Some(&pi), &mu, &mut rng)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(17), draw(17));
        assert_ne!(draw(17), draw(18));
    }

    #[test]
    fn iid_on_deterministic_chain_is_constant() {
        let mdp = one_state();
        let pi = Policy::uniform(1, 1);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        let mut rng = stream_rng(0, Stream::Tuples);
        for _ in 0..16 {
            let t = sample_iid(&mdp, Some(&pi), &mu, &mut rng);
            assert_eq!(
                t,
                Transition {
                    s: 0,
                    a: 0,
                    r: 0.5,
                    s_next: 0,
                    a_next: Some(0)
                }
            );
        }
    }

    #[test]
    fn markov_chain_is_consistent_and_alternates_on_cycle() {
        let mdp = cycle();
        let pi = Policy::uniform(2, 1);
        let mut rng = stream_rng(1, Stream::Tuples);
        let mut state = (0usize, 0usize);
        let mut prev_next = None;
        for k in 0..32 {
            let (t, next) = sample_markov(state, &mdp, &pi, &mut rng);
            assert_eq!(t.s, k % 2, "cycle must alternate");
            if let Some(expected_s) = prev_next {
                assert_eq!(t.s, expected_s);
            }
            prev_next = Some(t.s_next);
            state = next;
        }
    }

    #[test]
    fn qlearning_tuples_omit_next_action() {
        let (mdp, _) = crate::env::build_random_mdp(3, 2, 4, 2, 5).unwrap();
        let pi = Policy::uniform(3, 2);
        let mu = stationary_distribution(&mdp, &pi).unwrap();
        let mut rng = stream_rng(2, Stream::Tuples);
        let t = sample_iid(&mdp, None, &mu, &mut rng);
        assert!(t.a_next.is_none());
    }
}
