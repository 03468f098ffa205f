//! Parameterized robot action primitives over a kinematic manipulation
//! world, a hybrid discrete-continuous action interface and a PPO trainer.
//!
//! The crate is `no_std` and only needs an allocator; file formats, timing
//! and the command line live in the companion `raps-bench` crate.
#![no_std]
extern crate alloc;

pub mod error;
pub mod geom;
pub mod pamdp;
pub mod primitives;
pub mod rl;
pub mod sim;
pub mod tasks;

pub use error::{Error, Result};
pub use pamdp::{discount_for_horizon, ActionMode, HybridAction, HybridActionLayout, PamdpEnv};
pub use primitives::{default_library, DofMode, PrimitiveLibrary, PrimitiveSpec};
pub use sim::{ObsMode, Task, TaskSpec, WorldState};
