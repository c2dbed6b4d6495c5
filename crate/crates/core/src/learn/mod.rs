//! The pose-policy network and its phase-1 actor-critic training.

mod a2c;
mod network;

pub use a2c::{
    compute_returns, reward_window_means, train_from, train_pose_controller, TrainOutcome,
    UpdateLog,
};
pub use network::{
    backward, build_features, camera_tuple, forward, init_params, log_softmax, Forward,
    ForwardCache, ParamArray, PolicyParams, PoseObservation, ACTIONS, EMBED_DIM, FEATURE_DIM,
    HIDDEN_DIM, TUPLE_DIM,
};
