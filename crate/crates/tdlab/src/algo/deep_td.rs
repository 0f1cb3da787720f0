use crate::env::{sample_iid, stationary_distribution, FeatureMap, FiniteMdp, Policy};
use crate::error::{Error, Result};
use crate::net::{project_layerwise_in_place, DeepParams};
use crate::rng::{step_rng, Stream};

use super::config::{SamplingMode, TdConfig};

#[derive(Debug, Clone, Default)]
pub struct DeepTraceRow {
    pub t: usize,
    pub resid: f64,
    /// Max over pairs of `|Q - Q0|(.;W(t))`, the deep linearization error.
    pub lin_err_max: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DeepRunTrace {
    pub rows: Vec<DeepTraceRow>,
    pub ws_bar: Vec<Vec<f64>>,
    pub ws_final: Vec<Vec<f64>>,
    pub q_out: Vec<f64>,
    pub eta: f64,
}

/// Policy-evaluation TD with the multi-layer network, i.i.d. sampling, and
/// per-layer ball projection. The linearization error is measured against the
/// first-order expansion at the initialization, whose gradient is cached per
/// state-action pair.
pub fn deep_td(
    env: &FiniteMdp,
    fmap: &FeatureMap,
    policy: &Policy,
    net: &DeepParams,
    config: &TdConfig,
) -> Result<DeepRunTrace> {
    if config.sampling != SamplingMode::Iid {
        return Err(Error::Config(
            "the deep runner supports i.i.d. sampling only".into(),
        ));
    }
    if env.n_pairs() != fmap.n_pairs() || net.d() != fmap.d() {
        return Err(Error::DimensionMismatch(
            "environment, feature map, and network shapes disagree".into(),
        ));
    }
    let n = env.n_pairs();
    let gamma = env.gamma();
    // stochastic deep runs default to 1/sqrt(T)
    let eta = config
        .eta
        .unwrap_or_else(|| 1.0 / (config.t as f64).sqrt());
    let radius = config.spec.radius();
    let stride = config.effective_stride();
    let mu = stationary_distribution(env, policy)?;

    // first-order expansion data at the initialization
    let base0: Vec<f64> = (0..n)
        .map(|p| net.forward_with(net.ws0(), fmap.feature(p)))
        .collect();
    let grad0: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|p| net.grad_with(net.ws0(), fmap.feature(p)))
        .collect();

    let mut ws = net.ws().to_vec();
    let mut ws_bar = ws.clone();
    let mut rows = Vec::with_capacity(config.t - 1);
    for t in 0..config.t - 1 {
        let mut rng = step_rng(config.seed, Stream::Tuples, t as u64);
        let tuple = sample_iid(env, Some(policy), &mu, &mut rng);
        let a_next = tuple.a_next.expect("policy sampler always draws a next action");
        let x = fmap.feature(env.pair_index(tuple.s, tuple.a));
        let x_next = fmap.feature(env.pair_index(tuple.s_next, a_next));
        let delta = net.forward_with(&ws, x) - tuple.r - gamma * net.forward_with(&ws, x_next);

        let mut row = DeepTraceRow {
            t,
            resid: delta,
            ..Default::default()
        };
        if t % stride == 0 {
            let lin_err = (0..n)
                .map(|p| {
                    let q = net.forward_with(&ws, fmap.feature(p));
                    let q0 = base0[p] + DeepParams::tangent_dot(&grad0[p], &ws, net.ws0());
                    (q - q0).abs()
                })
                .fold(0.0, f64::max);
            row.lin_err_max = Some(lin_err);
        }

        let grads = net.grad_with(&ws, x);
        for (layer, g) in ws.iter_mut().zip(&grads) {
            for (wi, &gi) in layer.iter_mut().zip(g) {
                *wi -= eta * delta * gi;
            }
        }
        project_layerwise_in_place(&mut ws, net.ws0(), radius);

        let c_old = (t + 1) as f64 / (t + 2) as f64;
        let c_new = 1.0 / (t + 2) as f64;
        for (bar, cur) in ws_bar.iter_mut().zip(&ws) {
            for (bi, &wi) in bar.iter_mut().zip(cur) {
                *bi = c_old * *bi + c_new * wi;
            }
        }
        rows.push(row);
    }

    let q_out: Vec<f64> = (0..n)
        .map(|p| net.forward_with(&ws_bar, fmap.feature(p)))
        .collect();
    Ok(DeepRunTrace {
        rows,
        ws_bar,
        ws_final: ws,
        q_out,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_random_mdp_with_gamma;
    use crate::net::{distance, ProjectionSpec};

    #[test]
    fn deep_run_stays_in_the_layerwise_ball() {
        let (mdp, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 19, 0.9).unwrap();
        let net = DeepParams::init(2, 16, 4, 20).unwrap();
        let config = TdConfig::new(
            60,
            ProjectionSpec::new(0.5).unwrap(),
            SamplingMode::Iid,
            21,
        )
        .unwrap();
        let trace = deep_td(&mdp, &fmap, &Policy::uniform(3, 2), &net, &config).unwrap();
        assert_eq!(trace.rows.len(), 59);
        for (layer, layer0) in trace.ws_final.iter().zip(net.ws0()) {
            assert!(distance(layer, layer0) <= 0.5 + 1e-9);
        }
        assert!((trace.eta - 1.0 / 60.0f64.sqrt()).abs() < 1e-15);
        // linearization error was sampled and is finite
        assert!(trace
            .rows
            .iter()
            .filter_map(|r| r.lin_err_max)
            .all(|v| v.is_finite()));
    }

    #[test]
    fn deep_runner_rejects_population_mode() {
        let (mdp, fmap) = build_random_mdp_with_gamma(3, 2, 4, 2, 19, 0.9).unwrap();
        let net = DeepParams::init(1, 8, 4, 22).unwrap();
        let config = TdConfig::new(
            10,
            ProjectionSpec::new(0.5).unwrap(),
            SamplingMode::Population,
            0,
        )
        .unwrap();
        assert!(deep_td(&mdp, &fmap, &Policy::uniform(3, 2), &net, &config).is_err());
    }
}
