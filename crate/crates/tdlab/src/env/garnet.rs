use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mdp::{FeatureMap, FiniteMdp};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Garnet-style random MDP plus a random unit-sphere feature embedding.
///
/// Each state-action pair transitions to `branching` distinct successors with
/// random normalized weights; rewards are uniform in `[-1, 1]`; features are
/// i.i.d. uniform unit vectors in `R^d`, which keeps the embedding generic
/// rather than axis-aligned. Deterministic given `seed`.
pub fn build_random_mdp(
    n_states: usize,
    n_actions: usize,
    d: usize,
    branching: usize,
    seed: u64,
) -> Result<(FiniteMdp, FeatureMap)> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument(
            "n_states and n_actions must be positive".into(),
        ));
    }
    if branching == 0 || branching > n_states {
        return Err(Error::InvalidArgument(format!(
            "branching must lie in 1..={n_states}, got {branching}"
        )));
    }
    if d < 3 {
        return Err(Error::InvalidArgument(format!(
            "feature dimension must be at least 3, got {d}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Env);
    let n_pairs = n_states * n_actions;

    let mut transition = vec![0.0; n_pairs * n_states];
    let mut scratch: Vec<usize> = (0..n_states).collect();
    for pair in 0..n_pairs {
        // partial Fisher-Yates for `branching` distinct successors
        for k in 0..branching {
            let j = rng.random_range(k..n_states);
            scratch.swap(k, j);
        }
        let mut weights: Vec<f64> = (0..branching)
            .map(|_| rng.random::<f64>() + 1e-3)
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        // force exact row sums
        let correction: f64 = 1.0 - weights.iter().sum::<f64>();
        weights[0] += correction;
        for (k, &w) in weights.iter().enumerate() {
            transition[pair * n_states + scratch[k]] += w;
        }
    }

    let reward: Vec<f64> = (0..n_pairs).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();

    let mut features = vec![0.0; n_pairs * d];
    for pair in 0..n_pairs {
        let row = &mut features[pair * d..(pair + 1) * d];
        loop {
            for v in row.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                row.iter_mut().for_each(|v| *v /= norm);
                break;
            }
        }
    }

    let mdp = FiniteMdp::new(n_states, n_actions, transition, reward, 0.9, 1.0)?;
    let fmap = FeatureMap::new(d, n_pairs, features)?;
    Ok((mdp, fmap))
}

/// Same generator with an explicit discount.
pub fn build_random_mdp_with_gamma(
    n_states: usize,
    n_actions: usize,
    d: usize,
    branching: usize,
    seed: u64,
    gamma: f64,
) -> Result<(FiniteMdp, FeatureMap)> {
    let (mdp, fmap) = build_random_mdp(n_states, n_actions, d, branching, seed)?;
    let mdp = FiniteMdp::new(
        mdp.n_states(),
        mdp.n_actions(),
        mdp.transition_tensor().to_vec(),
        mdp.reward_table().to_vec(),
        gamma,
        mdp.r_bar(),
    )?;
    Ok((mdp, fmap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let a = build_random_mdp(5, 2, 4, 3, 42).unwrap();
        let b = build_random_mdp(5, 2, 4, 3, 42).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = build_random_mdp(5, 2, 4, 3, 43).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn generated_features_are_separated() {
        let (_, fmap) = build_random_mdp(6, 3, 5, 2, 7).unwrap();
        let n = fmap.n_pairs();
        let mut min_dist = f64::INFINITY;
        for i in 0..n {
            for j in (i + 1)..n {
                let dist = fmap
                    .feature(i)
                    .iter()
                    .zip(fmap.feature(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min_dist = min_dist.min(dist);
            }
        }
        assert!(min_dist > 1e-9);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(build_random_mdp(0, 2, 4, 1, 0).is_err());
        assert!(build_random_mdp(3, 2, 4, 4, 0).is_err());
        assert!(build_random_mdp(3, 2, 4, 0, 0).is_err());
        assert!(build_random_mdp(3, 2, 2, 1, 0).is_err());
    }
}
