//! Finite MDPs, unit-sphere feature embeddings, policies, stationary
//! distributions, and i.i.d./Markov tuple samplers.
//!
//! Everything here is immutable after construction and safe to share across
//! threads; samplers carry their own generator state.

mod garnet;
mod mdp;
mod mixing;
mod sampler;
mod serialize;

pub use garnet::{build_random_mdp, build_random_mdp_with_gamma};
pub use mdp::{FeatureMap, FiniteMdp, Policy, StationaryDist, Transition};
pub use mixing::{estimate_mixing, MixingCurve};
pub use sampler::{sample_iid, sample_markov, stationary_distribution};
pub use serialize::{env_content_hash, load_env, save_env, EnvDocument, ENV_DOC_VERSION};
