use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::net::two_layer::dot;
use crate::rng::{stream_rng, Stream};

/// Multi-layer ReLU network.
///
/// Layers: `x0 = A x`, `x_h = relu(W_h x_{h-1}) / sqrt(m)` for `h = 1..=H`,
/// output `y = b . x_H`. The input matrix `A` and output vector `b` are
/// frozen; only the hidden matrices train. Entries of `A` and the hidden
/// matrices are initialized `N(0, 2)`, entries of `b` are `N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepParams {
    h: usize,
    m: usize,
    d: usize,
    input_a: Vec<f64>,
    out_b: Vec<f64>,
    ws: Vec<Vec<f64>>,
    ws0: Vec<Vec<f64>>,
    inv_sqrt_m: f64,
}

impl DeepParams {
    pub fn init(h: usize, m: usize, d: usize, seed: u64) -> Result<Self> {
        if h < 1 {
            return Err(Error::InvalidArgument(
                "need at least one hidden weight matrix".into(),
            ));
        }
        if m < 1 || d < 1 {
            return Err(Error::InvalidArgument(
                "width and input dimension must be positive".into(),
            ));
        }
        let mut rng = stream_rng(seed, Stream::Init);
        let sqrt2 = 2.0f64.sqrt();
        let mut gauss = |scale: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        };
        let input_a: Vec<f64> = (0..m * d).map(|_| gauss(sqrt2)).collect();
        let ws0: Vec<Vec<f64>> = (0..h)
            .map(|_| (0..m * m).map(|_| gauss(sqrt2)).collect())
            .collect();
        let out_b: Vec<f64> = (0..m).map(|_| gauss(1.0)).collect();
        Ok(Self {
            h,
            m,
            d,
            input_a,
            out_b,
            ws: ws0.clone(),
            ws0,
            inv_sqrt_m: 1.0 / (m as f64).sqrt(),
        })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ws(&self) -> &[Vec<f64>] {
        &self.ws
    }

    pub fn ws_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.ws
    }

    pub fn ws0(&self) -> &[Vec<f64>] {
        &self.ws0
    }

    fn check_shapes(&self, ws: &[Vec<f64>], x: &[f64]) {
        assert_eq!(x.len(), self.d, "input dimension mismatch");
        assert_eq!(ws.len(), self.h, "layer count mismatch");
        for w in ws {
            assert_eq!(w.len(), self.m * self.m, "hidden layer shape mismatch");
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_with(&self.ws, x)
    }

    pub fn forward_with(&self, ws: &[Vec<f64>], x: &[f64]) -> f64 {
        self.check_shapes(ws, x);
        let mut act = self.input_layer(x);
        let mut next = vec![0.0; self.m];
        for w in ws {
            for i in 0..self.m {
                let pre = dot(&w[i * self.m..(i + 1) * self.m], &act);
                next[i] = if pre > 0.0 { pre * self.inv_sqrt_m } else { 0.0 };
            }
            std::mem::swap(&mut act, &mut next);
        }
        dot(&self.out_b, &act)
    }

    fn input_layer(&self, x: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| dot(&self.input_a[i * self.d..(i + 1) * self.d], x))
            .collect()
    }

    /// Exact reverse-mode gradient with respect to the hidden matrices, with
    /// the strict ReLU subgradient convention.
    pub fn grad(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.grad_with(&self.ws, x)
    }

    pub fn grad_with(&self, ws: &[Vec<f64>], x: &[f64]) -> Vec<Vec<f64>> {
        self.check_shapes(ws, x);
        // forward pass, keeping activations and preactivation signs
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.h + 1);
        acts.push(self.input_layer(x));
        let mut active: Vec<Vec<bool>> = Vec::with_capacity(self.h);
        for w in ws {
            let prev = acts.last().unwrap();
            let mut a = vec![0.0; self.m];
            let mut on = vec![false; self.m];
            for i in 0..self.m {
                let pre = dot(&w[i * self.m..(i + 1) * self.m], prev);
                if pre > 0.0 {
                    a[i] = pre * self.inv_sqrt_m;
                    on[i] = true;
                }
            }
            acts.push(a);
            active.push(on);
        }
        // backward pass
        let mut grads: Vec<Vec<f64>> = vec![vec![0.0; self.m * self.m]; self.h];
        let mut dx = self.out_b.clone();
        for layer in (0..self.h).rev() {
            let prev = &acts[layer];
            let on = &active[layer];
            let mut dz = vec![0.0; self.m];
            for i in 0..self.m {
                if on[i] {
                    dz[i] = dx[i] * self.inv_sqrt_m;
                }
            }
            let g = &mut grads[layer];
            for i in 0..self.m {
                if dz[i] != 0.0 {
                    let row = &mut g[i * self.m..(i + 1) * self.m];
                    for (gi, &p) in row.iter_mut().zip(prev) {
                        *gi = dz[i] * p;
                    }
                }
            }
            if layer > 0 {
                let w = &ws[layer];
                let mut dprev = vec![0.0; self.m];
                for i in 0..self.m {
                    if dz[i] != 0.0 {
                        let row = &w[i * self.m..(i + 1) * self.m];
                        for (dp, &wij) in dprev.iter_mut().zip(row) {
                            *dp += dz[i] * wij;
                        }
                    }
                }
                dx = dprev;
            }
        }
        grads
    }

    /// First-order expansion around the initialization:
    /// `forward(ws0, x) + <grad(ws0, x), ws_eval - ws0>`, affine in `ws_eval`.
    pub fn linearized_forward(&self, ws_eval: &[Vec<f64>], x: &[f64]) -> f64 {
        self.check_shapes(ws_eval, x);
        let base = self.forward_with(&self.ws0, x);
        let g0 = self.grad_with(&self.ws0, x);
        base + Self::tangent_dot(&g0, ws_eval, &self.ws0)
    }

    /// `<g, ws - ws0>` summed over layers; used with a cached base gradient.
    pub fn tangent_dot(g0: &[Vec<f64>], ws: &[Vec<f64>], ws0: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for ((g, w), w0) in g0.iter().zip(ws).zip(ws0) {
            for ((gi, wi), w0i) in g.iter().zip(w).zip(w0) {
                acc += gi * (wi - w0i);
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::projection::{distance, project_layerwise_in_place};
    use crate::test_util::unit_vec;

    #[test]
    fn rejects_zero_layers() {
        assert!(DeepParams::init(0, 4, 3, 0).is_err());
    }

    #[test]
    fn linearization_is_exact_at_base_point() {
        let net = DeepParams::init(2, 16, 4, 5).unwrap();
        let x = unit_vec(4, 31);
        let lhs = net.linearized_forward(net.ws0(), &x);
        let rhs = net.forward_with(net.ws0(), &x);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn linearization_is_affine() {
        let net = DeepParams::init(2, 12, 4, 9).unwrap();
        let x = unit_vec(4, 32);
        let mut rng = crate::rng::stream_rng(77, crate::rng::Stream::Aux);
        use rand::Rng;
        let perturb = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<Vec<f64>> {
            net.ws0()
                .iter()
                .map(|w| w.iter().map(|v| v + rng.random::<f64>() - 0.5).collect())
                .collect()
        };
        let wa = perturb(&mut rng);
        let wb = perturb(&mut rng);
        let alpha = 0.3;
        let mix: Vec<Vec<f64>> = wa
            .iter()
            .zip(&wb)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                    .collect()
            })
            .collect();
        let lhs = net.linearized_forward(&mix, &x);
        let rhs =
            alpha * net.linearized_forward(&wa, &x) + (1.0 - alpha) * net.linearized_forward(&wb, &x);
        assert!((lhs - rhs).abs() < 1e-9, "affine superposition failed: {lhs} vs {rhs}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let net = DeepParams::init(2, 8, 3, 3).unwrap();
        let x = unit_vec(3, 33);
        let h = 1e-6;
        let grads = net.grad(&x);
        let mut ws = net.ws().to_vec();
        for layer in 0..net.h() {
            for i in 0..ws[layer].len() {
                let orig = ws[layer][i];
                ws[layer][i] = orig + h;
                let up = net.forward_with(&ws, &x);
                ws[layer][i] = orig - h;
                let down = net.forward_with(&ws, &x);
                ws[layer][i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (fd - grads[layer][i]).abs() <= 1e-5,
                    "layer {layer} entry {i}: fd {fd} vs {}",
                    grads[layer][i]
                );
            }
        }
    }

    #[test]
    fn layerwise_projection_is_per_layer() {
        let net = DeepParams::init(2, 6, 3, 4).unwrap();
        let mut ws = net.ws().to_vec();
        let b = 0.5;
        // displace layer 1 by 2b, leave layer 0 at the initialization
        let dim = ws[1].len();
        for (i, v) in ws[1].iter_mut().enumerate() {
            *v = net.ws0()[1][i] + 2.0 * b / (dim as f64).sqrt();
        }
        project_layerwise_in_place(&mut ws, net.ws0(), b);
        assert_eq!(ws[0], net.ws0()[0]);
        assert!((distance(&ws[1], &net.ws0()[1]) - b).abs() < 1e-12);
    }
}
