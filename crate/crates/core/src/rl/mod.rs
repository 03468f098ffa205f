//! From-scratch PPO over the hybrid action space.

pub mod buffer;
pub mod gae;
pub mod net;
pub mod normalize;
pub mod policy;
pub mod ppo;
pub mod train;

pub use buffer::{RolloutBuffer, Segment};
pub use gae::compute_gae;
pub use net::{NetShape, ParamSegment, PolicyParams};
pub use normalize::ObsNormalizer;
pub use policy::{Policy, SampledAction};
pub use ppo::{ppo_update, Adam, LossStats, PpoConfig, PpoUpdate, UpdateDiagnostics};
pub use train::{
    eval_seeds, evaluate, net_shape, train, Budget, Clock, CurvePoint, EnvWorker, EpisodeRecord, EvalResult,
    FrozenClock, RolloutExecutor, SequentialExecutor, StopReason, TrainOutcome, TrainSetup,
};
