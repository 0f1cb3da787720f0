use crate::env::FeatureMap;
use crate::net::{dot, TwoLayerParams};

/// Tangent features of a two-layer network at its initialization.
///
/// For each state-action embedding `x`, block `r` of `phi(x)` is
/// `b_r 1{w0_r . x > 0} x / sqrt(m)`, with the output sign absorbed into the
/// block so that the linearized network is the plain inner product
/// `phi(x) . w`. The class of such functions over the feasible ball is what
/// the fixed-point solvers project onto.
#[derive(Debug, Clone)]
pub struct LinearizedFeatures {
    m: usize,
    d: usize,
    n_pairs: usize,
    phi: Vec<f64>,
    base: Vec<f64>,
    active: Vec<bool>,
    gram: Vec<f64>,
    w0: Vec<f64>,
}

impl LinearizedFeatures {
    pub fn new(net: &TwoLayerParams, fmap: &FeatureMap) -> Self {
        assert_eq!(net.d(), fmap.d(), "embedding dimension mismatch");
        let m = net.m();
        let d = net.d();
        let n_pairs = fmap.n_pairs();
        let inv_sqrt_m = net.inv_sqrt_m();

        let mut phi = vec![0.0; n_pairs * m * d];
        let mut active = vec![false; n_pairs * m];
        let mut base = vec![0.0; n_pairs];
        for p in 0..n_pairs {
            let x = fmap.feature(p);
            let row = &mut phi[p * m * d..(p + 1) * m * d];
            for r in 0..m {
                let pre0 = dot(&net.w0()[r * d..(r + 1) * d], x);
                if pre0 > 0.0 {
                    active[p * m + r] = true;
                    let b = net.signs()[r] * inv_sqrt_m;
                    for (dst, &xi) in row[r * d..(r + 1) * d].iter_mut().zip(x) {
                        *dst = b * xi;
                    }
                }
            }
            base[p] = dot(row, net.w0());
        }

        let mut gram = vec![0.0; n_pairs * n_pairs];
        for i in 0..n_pairs {
            for j in 0..=i {
                let g = dot(
                    &phi[i * m * d..(i + 1) * m * d],
                    &phi[j * m * d..(j + 1) * m * d],
                );
                gram[i * n_pairs + j] = g;
                gram[j * n_pairs + i] = g;
            }
        }

        Self {
            m,
            d,
            n_pairs,
            phi,
            base,
            active,
            gram,
            w0: net.w0().to_vec(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Tangent feature vector of one pair, length `m*d`.
    pub fn phi(&self, pair: usize) -> &[f64] {
        &self.phi[pair * self.m * self.d..(pair + 1) * self.m * self.d]
    }

    /// Values of the linearized network at the initialization.
    pub fn base(&self) -> &[f64] {
        &self.base
    }

    /// Per-unit activity indicators at the initialization.
    pub fn active(&self, pair: usize) -> &[bool] {
        &self.active[pair * self.m..(pair + 1) * self.m]
    }

    /// Gram matrix `K[i,j] = phi(x_i) . phi(x_j)`, row-major.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    pub fn w0(&self) -> &[f64] {
        &self.w0
    }

    /// Linearized value `phi(x) . w` at one pair.
    pub fn value(&self, pair: usize, w: &[f64]) -> f64 {
        dot(self.phi(pair), w)
    }

    /// Linearized value table over all pairs.
    pub fn values(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n_pairs).map(|p| self.value(p, w)).collect()
    }

    /// Value table at `w0 + displacement`.
    pub fn values_at_displacement(&self, delta: &[f64]) -> Vec<f64> {
        (0..self.n_pairs)
            .map(|p| self.base[p] + dot(self.phi(p), delta))
            .collect()
    }

    /// Materialize `w0 + sum_x alpha_x phi(x)`.
    pub fn lift(&self, alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.n_pairs, "coefficient count mismatch");
        let mut w = self.w0.clone();
        for (p, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for (wi, &f) in w.iter_mut().zip(self.phi(p)) {
                    *wi += a * f;
                }
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::build_random_mdp;
    use crate::net::dot;
    use rand::Rng;

    fn setup() -> (TwoLayerParams, FeatureMap, LinearizedFeatures) {
        let (_, fmap) = build_random_mdp(4, 2, 5, 2, 3).unwrap();
        let net = TwoLayerParams::init(32, 5, 9);
        let feats = LinearizedFeatures::new(&net, &fmap);
        (net, fmap, feats)
    }

    #[test]
    fn base_values_equal_network_at_initialization() {
        let (net, fmap, feats) = setup();
        for p in 0..fmap.n_pairs() {
            let q = net.forward_with(net.w0(), fmap.feature(p));
            assert!((feats.base()[p] - q).abs() < 1e-13);
        }
    }

    #[test]
    fn values_reproduce_linearized_forward() {
        let (net, fmap, feats) = setup();
        let mut rng = crate::rng::stream_rng(12, crate::rng::Stream::Aux);
        let w: Vec<f64> = (0..net.w().len()).map(|_| rng.random::<f64>() - 0.5).collect();
        for p in 0..fmap.n_pairs() {
            let via_feats = feats.value(p, &w);
            let via_net = net.linearized_forward(&w, fmap.feature(p));
            assert!((via_feats - via_net).abs() < 1e-12);
        }
    }

    #[test]
    fn feature_norms_are_at_most_one() {
        let (_, _, feats) = setup();
        for p in 0..feats.n_pairs() {
            let norm = dot(feats.phi(p), feats.phi(p)).sqrt();
            assert!(norm <= 1.0 + 1e-12);
            assert!((feats.gram()[p * feats.n_pairs() + p] - norm * norm).abs() < 1e-12);
        }
    }

    #[test]
    fn blocks_are_zero_exactly_on_inactive_units() {
        let (net, fmap, feats) = setup();
        let d = net.d();
        for p in 0..fmap.n_pairs() {
            let x = fmap.feature(p);
            for r in 0..net.m() {
                let pre0 = dot(&net.w0()[r * d..(r + 1) * d], x);
                let block = &feats.phi(p)[r * d..(r + 1) * d];
                let zero = block.iter().all(|&v| v == 0.0);
                assert_eq!(pre0 > 0.0, !zero, "pair {p} unit {r}");
                assert_eq!(pre0 > 0.0, feats.active(p)[r]);
            }
        }
    }

    #[test]
    fn displacement_evaluation_is_linear() {
        let (net, _, feats) = setup();
        let mut rng = crate::rng::stream_rng(13, crate::rng::Stream::Aux);
        let delta: Vec<f64> = (0..net.w().len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let via_disp = feats.values_at_displacement(&delta);
        let w: Vec<f64> = net.w0().iter().zip(&delta).map(|(a, b)| a + b).collect();
        let via_w = feats.values(&w);
        for (a, b) in via_disp.iter().zip(&via_w) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
