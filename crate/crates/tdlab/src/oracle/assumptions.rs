use serde::Serialize;

use super::features::LinearizedFeatures;
use super::metrics::{softmax_value, Softness};
use crate::env::{stationary_distribution, FiniteMdp, Policy};
use crate::error::{Error, Result};
use crate::net::{distance, random_ball_displacement, ProjectionSpec, TwoLayerParams};
use crate::rng::{stream_rng, Stream};

/// Empirical margin between the discount factor and the worst-case ratio of
/// pair-weighted value gaps to state-weighted max (or softmax) gaps.
///
/// A negative `nu_hat` means the regularity condition the optimality analysis
/// leans on fails on the probed pairs; dependent experiments should be
/// skipped with the report attached.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub nu_hat: f64,
    pub min_ratio: f64,
    pub gamma: f64,
    pub n_pairs_requested: usize,
    pub n_pairs_used: usize,
    pub n_degenerate: usize,
    pub witness_index: usize,
    /// Softmax temperature when probing the soft variant.
    pub softness: Option<f64>,
}

/// Probe the max-gap regularity ratio over random weight pairs in the ball.
pub fn estimate_nu(
    env: &FiniteMdp,
    pi_exp: &Policy,
    feats: &LinearizedFeatures,
    spec: &ProjectionSpec,
    n_pairs: usize,
    seed: u64,
    softness: Softness,
) -> Result<AssumptionReport> {
    if !pi_exp.is_exploration() {
        return Err(Error::Config(
            "exploration policy must put positive mass on every action".into(),
        ));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("need at least one probe pair".into()));
    }
    let mu = stationary_distribution(env, pi_exp)?;
    let mu_state = mu.state_marginal(env.n_actions());
    let n_actions = env.n_actions();
    let dim = feats.m() * feats.d();
    let mut rng = stream_rng(seed, Stream::Aux);

    let state_sharp = |q: &[f64]| -> Vec<f64> {
        (0..env.n_states())
            .map(|s| {
                let row = &q[s * n_actions..(s + 1) * n_actions];
                match softness {
                    Softness::Hard => row.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    Softness::Soft(beta) => softmax_value(beta, row),
                }
            })
            .collect()
    };

    let mut min_ratio = f64::INFINITY;
    let mut witness = 0usize;
    let mut used = 0usize;
    let mut degenerate = 0usize;
    for k in 0..n_pairs {
        let d1 = random_ball_displacement(dim, spec.radius(), false, &mut rng);
        let d2 = random_ball_displacement(dim, spec.radius(), false, &mut rng);
        let q1 = feats.values_at_displacement(&d1);
        let q2 = feats.values_at_displacement(&d2);
        let num: f64 = q1
            .iter()
            .zip(&q2)
            .zip(mu.probs())
            .map(|((a, b), &w)| w * (a - b) * (a - b))
            .sum();
        let s1 = state_sharp(&q1);
        let s2 = state_sharp(&q2);
        let den: f64 = s1
            .iter()
            .zip(&s2)
            .zip(&mu_state)
            .map(|((a, b), &w)| w * (a - b) * (a - b))
            .sum();
        if den < 1e-12 {
            degenerate += 1;
            continue;
        }
        used += 1;
        let ratio = num.sqrt() / den.sqrt();
        if ratio < min_ratio {
            min_ratio = ratio;
            witness = k;
        }
    }
    if used == 0 {
        return Err(Error::Degenerate(
            "every probed weight pair had a vanishing max-gap denominator".into(),
        ));
    }
    Ok(AssumptionReport {
        nu_hat: min_ratio - env.gamma(),
        min_ratio,
        gamma: env.gamma(),
        n_pairs_requested: n_pairs,
        n_pairs_used: used,
        n_degenerate: degenerate,
        witness_index: witness,
        softness: match softness {
            Softness::Hard => None,
            Softness::Soft(beta) => Some(beta),
        },
    })
}

/// Membership check for the feasible function class: is `w` within the ball
/// around the initialization, and by what margin?
pub fn function_ball_check(net: &TwoLayerParams, w: &[f64], spec: &ProjectionSpec) -> (bool, f64) {
    assert_eq!(w.len(), net.w0().len(), "weight shape mismatch");
    let margin = spec.radius() - distance(w, net.w0());
    (margin >= 0.0, margin)
}
