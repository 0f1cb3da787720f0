//! Ground-truth machinery: tangent features, projected Bellman fixed-point
//! solvers, exact error metrics, the random-ReLU kernel, and regularity
//! probes. Everything here is deterministic given its inputs; internal sums
//! run in a fixed order.

mod assumptions;
mod features;
mod kernel;
mod metrics;
mod solver;

pub use assumptions::{estimate_nu, function_ball_check, AssumptionReport};
pub use features::LinearizedFeatures;
pub use kernel::{kernel_closed_form, kernel_mc};
pub use metrics::{
    bellman_eval_apply, bellman_opt_apply, msbe, mspbe, mu_norm_sq, q_pi_exact, softmax_value,
    Softness,
};
pub use solver::{
    solve_projected_evaluation, solve_projected_optimality, BallProjector, FixedPoint,
    FixedPointKind, Projection,
};
