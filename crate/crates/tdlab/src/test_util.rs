//! Helpers shared by unit tests.

use rand_distr::{Distribution, StandardNormal};

use crate::rng::{stream_rng, Stream};

pub fn unit_vec(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, Stream::Aux);
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
