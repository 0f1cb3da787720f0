use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Two-layer ReLU network `Q(x) = m^{-1/2} sum_r b_r relu(w_r . x)`.
///
/// The output signs `b` and the initialization snapshot `w0` are frozen at
/// construction; only `w` is trainable. Rows of `w0` are Gaussian with
/// covariance `I_d / d`, signs are uniform in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLayerParams {
    m: usize,
    d: usize,
    signs: Vec<f64>,
    w: Vec<f64>,
    w0: Vec<f64>,
    inv_sqrt_m: f64,
}

impl TwoLayerParams {
    pub fn init(m: usize, d: usize, seed: u64) -> Self {
        assert!(m >= 1 && d >= 1, "width and input dimension must be positive");
        let mut rng = stream_rng(seed, Stream::Init);
        let signs: Vec<f64> = (0..m)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let scale = 1.0 / (d as f64).sqrt();
        let w0: Vec<f64> = (0..m * d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
            .collect();
        Self {
            m,
            d,
            signs,
            w: w0.clone(),
            w0,
            inv_sqrt_m: 1.0 / (m as f64).sqrt(),
        }
    }

    pub fn from_parts(signs: Vec<f64>, w: Vec<f64>, w0: Vec<f64>, d: usize) -> Result<Self> {
        let m = signs.len();
        if w.len() != m * d || w0.len() != m * d {
            return Err(Error::DimensionMismatch(format!(
                "weights must be {m}x{d}"
            )));
        }
        if signs.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        Ok(Self {
            m,
            d,
            signs,
            w,
            w0,
            inv_sqrt_m: 1.0 / (m as f64).sqrt(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn w0(&self) -> &[f64] {
        &self.w0
    }

    pub fn set_w(&mut self, w: Vec<f64>) {
        assert_eq!(w.len(), self.m * self.d, "weight shape mismatch");
        self.w = w;
    }

    pub fn inv_sqrt_m(&self) -> f64 {
        self.inv_sqrt_m
    }

    pub fn row(w: &[f64], d: usize, r: usize) -> &[f64] {
        &w[r * d..(r + 1) * d]
    }

    /// Network value at `x` under the current weights.
    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_with(&self.w, x)
    }

    /// Network value at `x` under explicit weights of the same shape.
    pub fn forward_with(&self, w: &[f64], x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d, "input dimension mismatch");
        assert_eq!(w.len(), self.m * self.d, "weight shape mismatch");
        let mut acc = 0.0;
        for r in 0..self.m {
            let pre = dot(&w[r * self.d..(r + 1) * self.d], x);
            if pre > 0.0 {
                acc += self.signs[r] * pre;
            }
        }
        acc * self.inv_sqrt_m
    }

    /// Exact (sub)gradient of the output with respect to the weights, as a
    /// flat `m*d` vector. Row `r` is `b_r 1{w_r . x > 0} x / sqrt(m)`; the
    /// indicator is strict, so the kink contributes zero.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.grad_with(&self.w, x)
    }

    pub fn grad_with(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.d, "input dimension mismatch");
        assert_eq!(w.len(), self.m * self.d, "weight shape mismatch");
        let mut g = vec![0.0; self.m * self.d];
        for r in 0..self.m {
            let pre = dot(&w[r * self.d..(r + 1) * self.d], x);
            if pre > 0.0 {
                let b = self.signs[r] * self.inv_sqrt_m;
                for (gi, &xi) in g[r * self.d..(r + 1) * self.d].iter_mut().zip(x) {
                    *gi = b * xi;
                }
            }
        }
        g
    }

    /// Locally linearized value: activation pattern frozen at `w0`, evaluated
    /// linearly at `w_eval`.
    pub fn linearized_forward(&self, w_eval: &[f64], x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d, "input dimension mismatch");
        assert_eq!(w_eval.len(), self.m * self.d, "weight shape mismatch");
        let mut acc = 0.0;
        for r in 0..self.m {
            let pre0 = dot(&self.w0[r * self.d..(r + 1) * self.d], x);
            if pre0 > 0.0 {
                acc += self.signs[r] * dot(&w_eval[r * self.d..(r + 1) * self.d], x);
            }
        }
        acc * self.inv_sqrt_m
    }

    /// Fraction of units whose activation pattern on `x` can have flipped
    /// relative to initialization: `1{|w0_r . x| <= ||w_r - w0_r||}` averaged
    /// over rows.
    pub fn flip_fraction(&self, x: &[f64]) -> f64 {
        self.flip_fraction_with(&self.w, x)
    }

    pub fn flip_fraction_with(&self, w: &[f64], x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d, "input dimension mismatch");
        assert_eq!(w.len(), self.m * self.d, "weight shape mismatch");
        let mut count = 0usize;
        for r in 0..self.m {
            let pre0 = dot(&self.w0[r * self.d..(r + 1) * self.d], x).abs();
            let disp = w[r * self.d..(r + 1) * self.d]
                .iter()
                .zip(&self.w0[r * self.d..(r + 1) * self.d])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if pre0 <= disp {
                count += 1;
            }
        }
        count as f64 / self.m as f64
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let doc = CheckpointDocument {
            version: CHECKPOINT_VERSION,
            m: self.m,
            d: self.d,
            signs: self.signs.iter().map(|&b| b as i8).collect(),
            w: self.w.clone(),
            w0: self.w0.clone(),
        };
        std::fs::write(path, serde_json::to_string(&doc)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let doc: CheckpointDocument = serde_json::from_str(&text)?;
        Self::from_parts(
            doc.signs.iter().map(|&b| b as f64).collect(),
            doc.w,
            doc.w0,
            doc.d,
        )
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Binary-free checkpoint document; weights survive the JSON round trip
/// losslessly (values are printed with full double precision).
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointDocument {
    pub version: u32,
    pub m: usize,
    pub d: usize,
    pub signs: Vec<i8>,
    pub w: Vec<f64>,
    pub w0: Vec<f64>,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
