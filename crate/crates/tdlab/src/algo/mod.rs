//! Training loops: TD policy evaluation, Q-learning, soft Q-learning, and the
//! KL-regularized actor-critic, with stochastic and exact-population
//! semigradients, ball projection, and iterate averaging.
//!
//! One run is a single logical thread; callers may execute many runs
//! concurrently since runs share only immutable inputs.

mod config;
mod deep_td;
mod sac;
mod semigrad;
mod td;
mod trace;

pub use config::{SamplingMode, SoftConfig, TdConfig};
pub use deep_td::{deep_td, DeepRunTrace, DeepTraceRow};
pub use sac::{boltzmann_policy, expected_return, soft_actor_critic, soft_value_table};
pub use semigrad::{
    linearized_population_from_values, residual_delta, residual_delta0,
    semigradient_linearized_population, semigradient_population, semigradient_stochastic,
    PairDynamics,
};
pub use td::{
    neural_q_learning, neural_q_learning_with_oracle, neural_soft_q, neural_soft_q_with_oracle,
    neural_td, neural_td_with_oracle,
};
pub use trace::{
    write_trace_csv, write_trace_rows, AssertionSummary, RunTrace, TraceRow, TRACE_CSV_COLUMNS,
};
