//! A small DDPG learner: dense networks with hand-written backpropagation,
//! Adam, a ring replay buffer and soft-updated target networks.
//!
//! Default sizes follow the usual low-dimensional setup: two hidden ReLU
//! layers of 40 and 30 units, a sigmoid actor output and a linear critic
//! output, with the action entering the critic at the second hidden layer.

mod adam;
mod ddpg;
pub mod gradcheck;
mod mlp;
mod replay;

pub use adam::Adam;
pub use ddpg::{Architecture, DdpgAgent, DdpgConfig, UpdateStats};
pub use mlp::{soft_update, Activation, Layer, MlpParams, SideInput, Trace};
pub use replay::{ReplayBuffer, Transition};
