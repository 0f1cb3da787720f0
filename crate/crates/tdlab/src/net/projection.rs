use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Radius of the feasible ball around the initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSpec {
    radius: f64,
}

impl ProjectionSpec {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Self { radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

pub fn distance(w: &[f64], w0: &[f64]) -> f64 {
    w.iter()
        .zip(w0)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Euclidean projection onto the ball `{w : ||w - w0|| <= radius}`: identity
/// inside, radial rescaling outside. Returns the pre-projection distance.
pub fn project_ball_in_place(w: &mut [f64], w0: &[f64], radius: f64) -> f64 {
    assert_eq!(w.len(), w0.len(), "weight shape mismatch");
    let dist = distance(w, w0);
    if dist > radius {
        let scale = radius / dist;
        for (wi, &w0i) in w.iter_mut().zip(w0) {
            *wi = w0i + scale * (*wi - w0i);
        }
    }
    dist
}

pub fn project_ball(w: &[f64], w0: &[f64], spec: &ProjectionSpec) -> Vec<f64> {
    let mut out = w.to_vec();
    project_ball_in_place(&mut out, w0, spec.radius);
    out
}

/// Per-layer Frobenius-ball projection for deep parameters; layers are
/// clipped independently.
pub fn project_layerwise_in_place(ws: &mut [Vec<f64>], ws0: &[Vec<f64>], radius: f64) {
    assert_eq!(ws.len(), ws0.len(), "layer count mismatch");
    for (w, w0) in ws.iter_mut().zip(ws0) {
        project_ball_in_place(w, w0, radius);
    }
}

pub fn project_layerwise(ws: &[Vec<f64>], ws0: &[Vec<f64>], spec: &ProjectionSpec) -> Vec<Vec<f64>> {
    let mut out = ws.to_vec();
    project_layerwise_in_place(&mut out, ws0, spec.radius);
    out
}

/// Random displacement of length `radius` (or uniform inside the ball) in
/// `dim` dimensions, for probing the feasible region.
pub fn random_ball_displacement(
    dim: usize,
    radius: f64,
    boundary: bool,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-9 {
            continue;
        }
        let r = if boundary {
            radius
        } else {
            radius * rng.random::<f64>().powf(1.0 / dim as f64)
        };
        v.iter_mut().for_each(|x| *x *= r / norm);
        return v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn center_is_unchanged() {
        let w0 = vec![1.0, 2.0, 3.0];
        let spec = ProjectionSpec::new(0.5).unwrap();
        assert_eq!(project_ball(&w0, &w0, &spec), w0);
    }

    #[test]
    fn point_at_twice_radius_maps_to_midpoint() {
        let w0 = vec![0.0, 0.0];
        let w = vec![2.0, 0.0];
        let spec = ProjectionSpec::new(1.0).unwrap();
        assert_eq!(project_ball(&w, &w0, &spec), vec![1.0, 0.0]);
    }

    #[test]
    fn projected_point_lands_on_sphere_collinearly() {
        let mut rng = stream_rng(3, Stream::Aux);
        let w0: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
        let w: Vec<f64> = w0.iter().map(|v| v + 3.0 * (rng.random::<f64>() - 0.2)).collect();
        let spec = ProjectionSpec::new(0.7).unwrap();
        let p = project_ball(&w, &w0, &spec);
        let dist = distance(&p, &w0);
        assert!((dist - 0.7).abs() < 1e-12);
        // collinearity: (p - w0) x (w - w0) = 0 via normalized dot ~ 1
        let dp = distance(&w, &w0);
        let cos: f64 = p
            .iter()
            .zip(&w0)
            .zip(w.iter().zip(&w0))
            .map(|((pi, w0i), (wi, w0j))| (pi - w0i) * (wi - w0j))
            .sum::<f64>()
            / (0.7 * dp);
        assert!((cos - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layerwise_projection_only_touches_violating_layers() {
        let ws0 = vec![vec![0.0; 4], vec![0.0; 4]];
        let inside = vec![0.1, 0.0, 0.0, 0.0];
        let outside = vec![2.0, 0.0, 0.0, 0.0];
        let spec = ProjectionSpec::new(1.0).unwrap();
        let out = project_layerwise(&[inside.clone(), outside], &ws0, &spec);
        assert_eq!(out[0], inside);
        assert!((distance(&out[1], &ws0[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn boundary_displacement_has_requested_norm() {
        let mut rng = stream_rng(8, Stream::Aux);
        let v = random_ball_displacement(48, 2.5, true, &mut rng);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 2.5).abs() < 1e-12);
        let u = random_ball_displacement(48, 2.5, false, &mut rng);
        let norm_u = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm_u <= 2.5 + 1e-12);
    }
}
