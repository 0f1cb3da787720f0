//! tdlab: a numerical laboratory for temporal-difference learning with
//! overparametrized ReLU networks on finite MDPs.
//!
//! The crate pairs every training loop with an independent fixed-point oracle
//! for the projected Bellman equation over the linearized (tangent) function
//! class, so convergence claims can be checked as executable assertions
//! rather than eyeballed from loss curves.
//!
//! Layout:
//! - [`env`]: finite MDPs, feature embeddings, policies, samplers.
//! - [`net`]: two-layer and multi-layer ReLU networks, projections.
//! - [`oracle`]: fixed-point solvers, exact metrics, kernel, regularity probes.
//! - [`algo`]: the TD / Q-learning / soft Q-learning / actor-critic loops.
//! - [`harness`]: experiment sweeps, scaling fits, CSV/JSON emission.

pub mod algo;
pub mod env;
pub mod error;
pub mod harness;
pub mod net;
pub mod oracle;
pub mod rng;

#[cfg(test)]
pub(crate) mod test_util;

pub use error::{Error, Result};
