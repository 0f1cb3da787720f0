use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ProjectionSpec;

/// How transition tuples are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    /// Exact expectation over the stationary distribution; no sampling.
    Population,
    /// Independent draws from the stationary distribution.
    Iid,
    /// Sequential draws along the state-action chain, after a burn-in.
    Markov,
}

impl SamplingMode {
    pub fn is_stochastic(self) -> bool {
        !matches!(self, SamplingMode::Population)
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone)]
pub struct TdConfig {
    /// Stepsize; `None` picks the mode default: `(1-gamma)/8` for population
    /// updates, `min{(1-gamma)/8, 1/sqrt(T)}` for stochastic ones.
    pub eta: Option<f64>,
    /// Iteration budget; the loop runs `T - 1` updates.
    pub t: usize,
    pub spec: ProjectionSpec,
    pub sampling: SamplingMode,
    pub seed: u64,
    /// Stride for the expensive per-iteration metrics and assertion suites:
    /// every iteration in population mode, every 10th in stochastic mode.
    pub metric_stride: Option<usize>,
    /// Markov-mode burn-in steps from the fixed start pair before the first
    /// recorded tuple.
    pub burn_in: usize,
}

impl TdConfig {
    pub fn new(t: usize, spec: ProjectionSpec, sampling: SamplingMode, seed: u64) -> Result<Self> {
        if t < 2 {
            return Err(Error::InvalidArgument(format!(
                "iteration budget must be at least 2, got {t}"
            )));
        }
        Ok(Self {
            eta: None,
            t,
            spec,
            sampling,
            seed,
            metric_stride: None,
            burn_in: 1000,
        })
    }

    /// Zero is allowed: a frozen run is the cheapest way to probe the
    /// network's action selection without moving the weights.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stepsize must be non-negative, got {eta}"
            )));
        }
        self.eta = Some(eta);
        Ok(self)
    }

    pub fn with_metric_stride(mut self, stride: usize) -> Self {
        self.metric_stride = Some(stride.max(1));
        self
    }

    pub fn effective_eta(&self, gamma: f64) -> f64 {
        match self.eta {
            Some(eta) => eta,
            None => {
                let pop = (1.0 - gamma) / 8.0;
                if self.sampling.is_stochastic() {
                    pop.min(1.0 / (self.t as f64).sqrt())
                } else {
                    pop
                }
            }
        }
    }

    pub fn effective_stride(&self) -> usize {
        self.metric_stride
            .unwrap_or(if self.sampling.is_stochastic() { 10 } else { 1 })
    }
}

/// Softmax-target configuration: inverse temperature plus the TD settings.
#[derive(Debug, Clone)]
pub struct SoftConfig {
    pub beta: f64,
    pub td: TdConfig,
}

impl SoftConfig {
    pub fn new(beta: f64, td: TdConfig) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "inverse temperature must be positive, got {beta}"
            )));
        }
        Ok(Self { beta, td })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ProjectionSpec {
        ProjectionSpec::new(2.0).unwrap()
    }

    #[test]
    fn default_stepsizes_follow_the_mode() {
        let pop = TdConfig::new(100, spec(), SamplingMode::Population, 0).unwrap();
        assert!((pop.effective_eta(0.9) - 0.0125).abs() < 1e-15);
        let sto = TdConfig::new(100, spec(), SamplingMode::Iid, 0).unwrap();
        // min{0.0125, 0.1} = 0.0125
        assert!((sto.effective_eta(0.9) - 0.0125).abs() < 1e-15);
        let sto_long = TdConfig::new(40_000, spec(), SamplingMode::Iid, 0).unwrap();
        assert!((sto_long.effective_eta(0.9) - 0.005).abs() < 1e-15);
        let sto_small_gamma = TdConfig::new(100, spec(), SamplingMode::Iid, 0).unwrap();
        // min{(1-0.1)/8 = 0.1125, 0.1} = 0.1
        assert!((sto_small_gamma.effective_eta(0.1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_budget_and_stepsize() {
        assert!(TdConfig::new(1, spec(), SamplingMode::Iid, 0).is_err());
        assert!(TdConfig::new(10, spec(), SamplingMode::Iid, 0)
            .unwrap()
            .with_eta(-0.1)
            .is_err());
        assert!(SoftConfig::new(
            0.0,
            TdConfig::new(10, spec(), SamplingMode::Iid, 0).unwrap()
        )
        .is_err());
    }
}
