//! Dense token-wise model stacks, checkpoints, activation capture and
//! task-vector arithmetic.

mod checkpoint;
mod forward;
pub mod io;

pub use checkpoint::{apply_update, task_vector, Activation, Checkpoint, LayerSpec, TaskVector};
pub use forward::{forward, forward_collect, ActivationRecord};
pub use io::{load_checkpoint, save_checkpoint, CalibrationPair};
