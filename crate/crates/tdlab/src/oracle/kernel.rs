use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::net::dot;
use crate::rng::{stream_rng, Stream};

fn check_unit(name: &str, v: &[f64]) -> Result<()> {
    let norm = dot(v, v).sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "{name} must be a unit vector, got norm {norm}"
        )));
    }
    Ok(())
}

/// Expected tangent kernel of a random ReLU unit,
/// `K(x, y) = E_w[1{w.x > 0, w.y > 0} x.y]` for Gaussian `w`.
///
/// Sign events are scale invariant, so the covariance of `w` drops out and
/// the joint activation probability is `(pi - angle(x,y)) / (2 pi)`, giving
/// the closed form `x.y (pi - arccos(x.y)) / (2 pi)`.
pub fn kernel_closed_form(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(
            "kernel arguments differ in length".into(),
        ));
    }
    check_unit("x", x)?;
    check_unit("y", y)?;
    let rho = dot(x, y).clamp(-1.0, 1.0);
    Ok(rho * (std::f64::consts::PI - rho.acos()) / (2.0 * std::f64::consts::PI))
}

/// Monte Carlo estimate of the same kernel from `n` Gaussian draws with
/// covariance `I_d / d`, plus the standard error of the mean.
pub fn kernel_mc(x: &[f64], y: &[f64], n: usize, seed: u64) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(
            "kernel arguments differ in length".into(),
        ));
    }
    check_unit("x", x)?;
    check_unit("y", y)?;
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let d = x.len();
    let scale = 1.0 / (d as f64).sqrt();
    let rho = dot(x, y);
    let mut rng = stream_rng(seed, Stream::Aux);
    let mut hits = 0u64;
    for _ in 0..n {
        let mut wx = 0.0;
        let mut wy = 0.0;
        for i in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            let w = z * scale;
            wx += w * x[i];
            wy += w * y[i];
        }
        if wx > 0.0 && wy > 0.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let est = p * rho;
    // Bernoulli standard error scaled by |x.y|
    let se = (p * (1.0 - p) / n as f64).sqrt() * rho.abs();
    Ok((est, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::unit_vec;

    #[test]
    fn coincident_inputs_give_one_half() {
        let x = unit_vec(6, 2);
        assert!((kernel_closed_form(&x, &x).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn antipodal_inputs_give_zero() {
        // exactly representable pair; the disjoint half-spaces leave no mass
        let x = vec![1.0, 0.0, 0.0, 0.0];
        let y = vec![-1.0, 0.0, 0.0, 0.0];
        assert!(kernel_closed_form(&x, &y).unwrap().abs() < 1e-12);
    }

    #[test]
    fn sixty_degrees_gives_one_sixth() {
        // x.y = 1/2: K = 0.5 (pi - pi/3) / (2 pi) = 1/6
        let x = vec![1.0, 0.0, 0.0];
        let y = vec![0.5, 3.0f64.sqrt() / 2.0, 0.0];
        let k = kernel_closed_form(&x, &y).unwrap();
        assert!((k - 1.0 / 6.0).abs() < 1e-12, "got {k}");
    }

    #[test]
    fn monte_carlo_agrees_within_four_standard_errors() {
        let x = vec![1.0, 0.0, 0.0];
        let y = vec![0.5, 3.0f64.sqrt() / 2.0, 0.0];
        let exact = kernel_closed_form(&x, &y).unwrap();
        let (est, se) = kernel_mc(&x, &y, 200_000, 7).unwrap();
        assert!((est - exact).abs() <= 4.0 * se, "gap {} vs 4se {}", (est - exact).abs(), 4.0 * se);
    }

    #[test]
    fn kernel_is_symmetric_and_gram_is_psd() {
        let vs: Vec<Vec<f64>> = (0..10).map(|i| unit_vec(5, 50 + i)).collect();
        let n = vs.len();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                gram[(i, j)] = kernel_closed_form(&vs[i], &vs[j]).unwrap();
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert_eq!(gram[(i, j)], gram[(j, i)]);
            }
        }
        let min_eig = gram
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert!(min_eig >= -1e-10, "min eigenvalue {min_eig}");
    }

    #[test]
    fn rejects_non_unit_inputs() {
        assert!(kernel_closed_form(&[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
        assert!(kernel_mc(&[1.0, 0.0], &[0.5, 0.5], 100, 0).is_err());
    }
}
