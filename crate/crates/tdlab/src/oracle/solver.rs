use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::features::LinearizedFeatures;
use super::metrics::{bellman_eval_apply, bellman_opt_apply, mu_norm_sq, Softness};
use crate::env::{stationary_distribution, FiniteMdp, Policy, StationaryDist};
use crate::error::{Error, Result};
use crate::net::{distance, ProjectionSpec};

/// Which projected Bellman equation a fixed point solves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FixedPointKind {
    Evaluation,
    Optimality,
    SoftOptimality { beta: f64 },
}

/// Solution of `Q = proj T Q` over the linearized class on the feasible ball.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub kind: FixedPointKind,
    /// Parameter point realizing the fixed-point function.
    pub w_star: Vec<f64>,
    /// Fixed-point values over all state-action pairs.
    pub q_values: Vec<f64>,
    /// `||Q* - proj T Q*||_mu`, recomputed after convergence.
    pub residual: f64,
    pub iterations: usize,
    /// The weighting distribution behind the projection.
    pub mu: StationaryDist,
    pub radius: f64,
}

/// mu-weighted least squares over the linearized class, constrained to the
/// ball `||w - w0|| <= radius`.
///
/// The normal equations in weight space are rank-deficient at desk scale
/// (`m*d >> n_pairs`), so the solve runs in function space: with
/// `S = D K D`, `D = diag(sqrt(mu))`, `K` the tangent Gram matrix, the ridge
/// path is `alpha(lambda) = D Q (Lambda + lambda)^{-1} Q^T D z` for the
/// eigenpairs `(Lambda, Q)` of `S`. `lambda = 0` gives the minimum-norm
/// least-squares solution; otherwise the multiplier is found by bisection
/// until the ball constraint is active within `1e-10`. This is the same
/// minimizer the md-dimensional normal equations define, computed through an
/// `n x n` eigendecomposition.
#[derive(Debug)]
pub struct BallProjector<'a> {
    feats: &'a LinearizedFeatures,
    mu: Vec<f64>,
    radius: f64,
    eigvals: Vec<f64>,
    // columns of Q scaled by D on the way in/out
    q_cols: DMatrix<f64>,
    sqrt_mu: Vec<f64>,
}

/// Result of one ball-constrained projection.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Projected values over all pairs.
    pub q: Vec<f64>,
    /// Representer coefficients: the displacement is `sum_x alpha_x phi(x)`.
    pub alpha: Vec<f64>,
    /// Euclidean length of the weight displacement.
    pub displacement: f64,
    /// Ridge multiplier (0 when the ball is inactive).
    pub lambda: f64,
}

const EIG_CUTOFF_REL: f64 = 1e-12;
const CONSTRAINT_TOL: f64 = 1e-10;

impl<'a> BallProjector<'a> {
    pub fn new(feats: &'a LinearizedFeatures, mu: &[f64], radius: f64) -> Self {
        let n = feats.n_pairs();
        assert_eq!(mu.len(), n, "weighting dimension mismatch");
        let sqrt_mu: Vec<f64> = mu.iter().map(|&v| v.sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                s[(i, j)] = sqrt_mu[i] * feats.gram()[i * n + j] * sqrt_mu[j];
            }
        }
        let eig = s.symmetric_eigen();
        let eigvals: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        Self {
            feats,
            mu: mu.to_vec(),
            radius,
            eigvals,
            q_cols: eig.eigenvectors,
            sqrt_mu,
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    fn alpha_for_lambda(&self, c: &DVector<f64>, lambda: f64, cutoff: f64) -> DVector<f64> {
        let n = self.eigvals.len();
        let mut gamma = DVector::<f64>::zeros(n);
        for i in 0..n {
            let denom = self.eigvals[i] + lambda;
            if lambda > 0.0 || self.eigvals[i] > cutoff {
                gamma[i] = c[i] / denom;
            }
        }
        let qg = &self.q_cols * gamma;
        DVector::from_iterator(n, qg.iter().zip(&self.sqrt_mu).map(|(v, s)| v * s))
    }

    fn norm_sq_for_lambda(&self, c: &DVector<f64>, lambda: f64, cutoff: f64) -> f64 {
        self.eigvals
            .iter()
            .zip(c.iter())
            .filter(|(&l, _)| lambda > 0.0 || l > cutoff)
            .map(|(&l, &ci)| l * ci * ci / ((l + lambda) * (l + lambda)))
            .sum()
    }

    /// Project `target` onto the feasible class in the mu-weighted norm.
    pub fn project(&self, target: &[f64]) -> Projection {
        let n = self.feats.n_pairs();
        assert_eq!(target.len(), n, "target dimension mismatch");
        let z: Vec<f64> = target
            .iter()
            .zip(self.feats.base())
            .map(|(t, b)| t - b)
            .collect();
        let dz = DVector::from_iterator(n, z.iter().zip(&self.sqrt_mu).map(|(v, s)| v * s));
        let c = self.q_cols.transpose() * dz;
        let max_eig = self.eigvals.iter().cloned().fold(0.0, f64::max);
        let cutoff = EIG_CUTOFF_REL * max_eig.max(1e-300);

        let b2 = self.radius * self.radius;
        let mut lambda = 0.0;
        if self.norm_sq_for_lambda(&c, 0.0, cutoff) > b2 {
            // bracket then bisect the multiplier; norm is decreasing in lambda
            let mut hi = max_eig.max(1.0);
            while self.norm_sq_for_lambda(&c, hi, cutoff) > b2 {
                hi *= 2.0;
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let norm = self.norm_sq_for_lambda(&c, mid, cutoff).sqrt();
                if norm > self.radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (norm - self.radius).abs() <= CONSTRAINT_TOL {
                    lo = mid;
                    hi = mid;
                    break;
                }
            }
            lambda = 0.5 * (lo + hi);
        }

        let alpha_v = self.alpha_for_lambda(&c, lambda, cutoff);
        let alpha: Vec<f64> = alpha_v.iter().cloned().collect();
        let displacement = self.norm_sq_for_lambda(&c, lambda, cutoff).sqrt();
        // fitted values q = base + K alpha
        let q: Vec<f64> = (0..n)
            .map(|i| {
                let mut acc = self.feats.base()[i];
                for j in 0..n {
                    acc += self.feats.gram()[i * n + j] * alpha[j];
                }
                acc
            })
            .collect();
        Projection {
            q,
            alpha,
            displacement,
            lambda,
        }
    }
}

const FIXED_POINT_MAX_ITERS: usize = 100_000;
const DIVERGENCE_WINDOW: usize = 500;

fn solve_fixed_point(
    kind: FixedPointKind,
    env: &FiniteMdp,
    policy: &Policy,
    feats: &LinearizedFeatures,
    spec: &ProjectionSpec,
    tol: f64,
    detect_divergence: bool,
) -> Result<FixedPoint> {
    let mu = stationary_distribution(env, policy)?;
    let projector = BallProjector::new(feats, mu.probs(), spec.radius());
    let apply = |q: &[f64]| -> Vec<f64> {
        match kind {
            FixedPointKind::Evaluation => bellman_eval_apply(env, policy, q),
            FixedPointKind::Optimality => bellman_opt_apply(env, q, Softness::Hard),
            FixedPointKind::SoftOptimality { beta } => {
                bellman_opt_apply(env, q, Softness::Soft(beta))
            }
        }
    };

    let mut q = feats.base().to_vec();
    let mut last_alpha = vec![0.0; feats.n_pairs()];
    let mut best_diff = f64::INFINITY;
    let mut non_decreasing = 0usize;
    let mut iterations = 0usize;
    loop {
        iterations += 1;
        if iterations > FIXED_POINT_MAX_ITERS {
            return Err(Error::Solver(format!(
                "fixed-point iteration exceeded {FIXED_POINT_MAX_ITERS} iterations; last step {best_diff:.3e}"
            )));
        }
        let target = apply(&q);
        let proj = projector.project(&target);
        let diff = mu_norm_sq(&proj.q, &q, &mu).sqrt();
        q = proj.q;
        last_alpha = proj.alpha;
        if diff < tol {
            break;
        }
        if detect_divergence {
            if diff >= best_diff {
                non_decreasing += 1;
                if non_decreasing >= DIVERGENCE_WINDOW {
                    return Err(Error::Solver(format!(
                        "residual non-decreasing over {DIVERGENCE_WINDOW} consecutive iterations \
                         (last step {diff:.3e}); the projected operator does not appear to contract"
                    )));
                }
            } else {
                non_decreasing = 0;
            }
        }
        best_diff = best_diff.min(diff);
    }

    let w_star = feats.lift(&last_alpha);
    let reproj = projector.project(&apply(&q));
    let residual = mu_norm_sq(&reproj.q, &q, &mu).sqrt();
    let margin = distance(&w_star, feats.w0());
    debug_assert!(margin <= spec.radius() + 1e-9, "fixed point left the ball");
    Ok(FixedPoint {
        kind,
        w_star,
        q_values: q,
        residual,
        iterations,
        mu,
        radius: spec.radius(),
    })
}

/// Fixed point of the projected Bellman evaluation operator for `policy`.
///
/// Each sweep applies the evaluation operator exactly and projects back onto
/// the feasible class; the composition is a `gamma`-contraction in the
/// mu-weighted norm, so the iteration converges geometrically.
pub fn solve_projected_evaluation(
    env: &FiniteMdp,
    policy: &Policy,
    feats: &LinearizedFeatures,
    spec: &ProjectionSpec,
    tol: f64,
) -> Result<FixedPoint> {
    solve_fixed_point(
        FixedPointKind::Evaluation,
        env,
        policy,
        feats,
        spec,
        tol,
        false,
    )
}

/// Fixed point of the projected Bellman optimality operator (hard max or
/// softmax target), weighted by the stationary distribution of the
/// exploration policy.
///
/// Contraction is not guaranteed without a margin between the discount and
/// the max-gap ratio; the solver runs regardless and reports divergence
/// instead of silently accepting a non-converging iteration.
pub fn solve_projected_optimality(
    env: &FiniteMdp,
    pi_exp: &Policy,
    feats: &LinearizedFeatures,
    spec: &ProjectionSpec,
    tol: f64,
    softness: Softness,
) -> Result<FixedPoint> {
    if !pi_exp.is_exploration() {
        return Err(Error::Config(
            "exploration policy must put positive mass on every action".into(),
        ));
    }
    let kind = match softness {
        Softness::Hard => FixedPointKind::Optimality,
        Softness::Soft(beta) => {
            if !(beta > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "softmax temperature must be positive, got {beta}"
                )));
            }
            FixedPointKind::SoftOptimality { beta }
        }
    };
    solve_fixed_point(kind, env, pi_exp, feats, spec, tol, true)
}
