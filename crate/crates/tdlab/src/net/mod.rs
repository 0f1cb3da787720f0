//! Two-layer and multi-layer ReLU Q-networks with frozen random
//! initialization, exact subgradients, local linearizations, and ball
//! projections.
//!
//! Parameter objects are plain values: training mutates a run-local copy, and
//! forward/gradient evaluation never touches the frozen fields.

mod deep;
mod projection;
mod two_layer;

pub use deep::DeepParams;
pub use projection::{
    distance, project_ball, project_ball_in_place, project_layerwise, project_layerwise_in_place,
    random_ball_displacement, ProjectionSpec,
};
pub use two_layer::{CheckpointDocument, TwoLayerParams, CHECKPOINT_VERSION};

pub(crate) use two_layer::dot;
