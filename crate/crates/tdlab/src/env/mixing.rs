use super::mdp::{FiniteMdp, Policy};
use super::sampler::stationary_distribution;
use crate::error::{Error, Result};

/// Exact total-variation decay of the state chain, with a geometric fit.
///
/// `tv[t] = sup_s d_TV(P_t(. | s_0 = s), mu_S)` for `t = 0..=horizon`, where
/// `P_t` is the state distribution after `t` steps of the chain induced by the
/// policy. Since conditioning both arguments through the same kernel cannot
/// increase total variation, the curve is non-increasing.
#[derive(Debug, Clone)]
pub struct MixingCurve {
    pub tv: Vec<f64>,
    /// Fitted prefactor of `iota * beta^t`.
    pub iota_hat: f64,
    /// Fitted decay rate; `>= 1` flags a chain that never mixes.
    pub beta_hat: f64,
    pub mixing: bool,
}

pub fn estimate_mixing(mdp: &FiniteMdp, policy: &Policy, horizon: usize) -> Result<MixingCurve> {
    if horizon < 2 {
        return Err(Error::InvalidArgument(format!(
            "mixing horizon must be at least 2, got {horizon}"
        )));
    }
    let n = mdp.n_states();
    let n_actions = mdp.n_actions();

    // state chain P_S(s'|s) = sum_a pi(a|s) P(s'|s,a)
    let mut state_chain = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..n_actions {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (s_next, &p) in mdp.next_state_row(s, a).iter().enumerate() {
                state_chain[s * n + s_next] += pa * p;
            }
        }
    }

    let mu = stationary_distribution(mdp, policy)?;
    let mu_state = mu.state_marginal(n_actions);

    // rows[s] is the distribution of s_t given s_0 = s
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let mut row = vec![0.0; n];
            row[s] = 1.0;
            row
        })
        .collect();
    let mut tv = Vec::with_capacity(horizon + 1);
    let sup_tv = |rows: &[Vec<f64>]| -> f64 {
        rows.iter()
            .map(|row| {
                0.5 * row
                    .iter()
                    .zip(&mu_state)
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    };
    tv.push(sup_tv(&rows));
    let mut next = vec![0.0; n];
    for _ in 0..horizon {
        for row in rows.iter_mut() {
            next.iter_mut().for_each(|v| *v = 0.0);
            for (s, &mass) in row.iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for s2 in 0..n {
                    next[s2] += mass * state_chain[s * n + s2];
                }
            }
            row.copy_from_slice(&next);
        }
        tv.push(sup_tv(&rows));
    }

    // log-linear fit of tv[t] ~ iota * beta^t over strictly positive entries,
    // skipping t = 0 (the fit targets the decay rate, not the start)
    let pts: Vec<(f64, f64)> = tv
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &v)| v > 1e-12)
        .map(|(t, &v)| (t as f64, v.ln()))
        .collect();
    let (iota_hat, beta_hat) = if pts.len() < 2 {
        // already indistinguishable from stationary
        (0.0, 0.0)
    } else {
        let n_pts = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n_pts * sxy - sx * sy) / (n_pts * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n_pts;
        (intercept.exp(), slope.exp())
    };
    Ok(MixingCurve {
        mixing: beta_hat < 1.0,
        tv,
        iota_hat,
        beta_hat,
    })
}
