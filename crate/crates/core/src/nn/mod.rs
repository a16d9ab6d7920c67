//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Everything is `f64`. Hidden layers use ReLU, the output layer is linear.
//! Randomness always comes from a generator passed in by the caller.

mod adam;
mod mlp;
mod time;

pub use adam::AdamState;
pub use mlp::{ForwardCache, Mlp, MlpGrads};
pub use time::time_embed;
