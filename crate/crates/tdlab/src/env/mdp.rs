use crate::error::{Error, Result};

/// A finite Markov decision process with bounded rewards.
///
/// Transitions are stored as a flat `[s][a][s']` tensor, rewards as `[s][a]`.
/// State-action pairs are indexed by `s * n_actions + a` everywhere in the
/// crate.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    r_bar: f64,
}

pub(crate) const STOCHASTIC_TOL: f64 = 1e-12;

impl FiniteMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        r_bar: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidArgument(
                "n_states and n_actions must be positive".into(),
            ));
        }
        if !(0.0 < gamma && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0,1), got {gamma}"
            )));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::DimensionMismatch(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "transition row (s={s}, a={a}) sums to {sum}, not 1"
                    )));
                }
                if row.iter().any(|&p| p < 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "transition row (s={s}, a={a}) has a negative entry"
                    )));
                }
            }
        }
        if reward.iter().any(|&r| r.abs() > r_bar) {
            return Err(Error::InvalidArgument(format!(
                "a reward exceeds the stated bound r_bar = {r_bar}"
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            r_bar,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_bar(&self) -> f64 {
        self.r_bar
    }

    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    pub fn pair_of(&self, index: usize) -> (usize, usize) {
        (index / self.n_actions, index % self.n_actions)
    }

    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Transition row P(· | s, a).
    pub fn next_state_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn transition_tensor(&self) -> &[f64] {
        &self.transition
    }
}

/// Unit-sphere embedding of state-action pairs, one vector per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    d: usize,
    table: Vec<f64>,
    n_pairs: usize,
}

impl FeatureMap {
    pub fn new(d: usize, n_pairs: usize, table: Vec<f64>) -> Result<Self> {
        if d <= 2 {
            return Err(Error::InvalidArgument(format!(
                "feature dimension must exceed 2, got {d}"
            )));
        }
        if table.len() != d * n_pairs {
            return Err(Error::DimensionMismatch(format!(
                "feature table has {} entries, expected {}",
                table.len(),
                d * n_pairs
            )));
        }
        let fm = Self { d, table, n_pairs };
        for i in 0..n_pairs {
            let norm = fm.feature(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "feature vector {i} has norm {norm}, expected 1"
                )));
            }
        }
        for i in 0..n_pairs {
            for j in (i + 1)..n_pairs {
                let dist = fm
                    .feature(i)
                    .iter()
                    .zip(fm.feature(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist <= 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "feature map is not injective: pairs {i} and {j} coincide"
                    )));
                }
            }
        }
        Ok(fm)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn feature(&self, pair: usize) -> &[f64] {
        &self.table[pair * self.d..][..self.d]
    }
}

/// A stochastic policy, row-stochastic over actions per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..][..n_actions];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::InvalidArgument(format!(
                    "policy row for state {s} sums to {sum}, not 1"
                )));
            }
            if row.iter().any(|&p| p < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "policy row for state {s} has a negative entry"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..][..self.n_actions]
    }

    /// An exploration policy must place positive mass on every action.
    pub fn is_exploration(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

/// Long-run distribution over state-action pairs under a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDist {
    probs: Vec<f64>,
}

impl StationaryDist {
    pub(crate) fn from_validated(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, pair: usize) -> f64 {
        self.probs[pair]
    }

    /// Marginal over states, summing out the action.
    pub fn state_marginal(&self, n_actions: usize) -> Vec<f64> {
        let n_states = self.probs.len() / n_actions;
        let mut out = vec![0.0; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                out[s] += self.probs[s * n_actions + a];
            }
        }
        out
    }
}

/// One sampled transition. `a_next` is drawn from the sampling policy when one
/// is supplied; learners that pick their own next action leave it empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub a_next: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_state_cycle() -> FiniteMdp {
        // deterministic cycle s0 <-> s1, one action
        FiniteMdp::new(2, 1, vec![0.0, 1.0, 1.0, 0.0], vec![0.3, -0.7], 0.9, 1.0).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = FiniteMdp::new(2, 1, vec![0.5, 0.4, 1.0, 0.0], vec![0.0, 0.0], 0.9, 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_gamma_and_reward_bound() {
        assert!(FiniteMdp::new(1, 1, vec![1.0], vec![0.0], 1.0, 1.0).is_err());
        assert!(FiniteMdp::new(1, 1, vec![1.0], vec![2.0], 0.9, 1.0).is_err());
    }

    #[test]
    fn pair_indexing_round_trips() {
        let mdp = two_state_cycle();
        for p in 0..mdp.n_pairs() {
            let (s, a) = mdp.pair_of(p);
            assert_eq!(mdp.pair_index(s, a), p);
        }
    }

    #[test]
    fn feature_map_rejects_duplicates_and_low_dim() {
        let v = vec![1.0, 0.0, 0.0];
        let table: Vec<f64> = v.iter().chain(v.iter()).copied().collect();
        assert!(FeatureMap::new(3, 2, table).is_err());
        assert!(FeatureMap::new(2, 1, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn uniform_policy_is_exploration() {
        let pi = Policy::uniform(3, 2);
        assert!(pi.is_exploration());
        assert_eq!(pi.prob(1, 0), 0.5);
    }
}
