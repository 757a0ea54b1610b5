//! Gradient-based fitting of the parameter masks.

pub mod adam;
pub mod decompose;
pub mod loss;
pub mod objective;

pub use adam::{adam_step, lr_schedule, AdamConfig, LrSchedule, OptimizerState};
pub use decompose::{decompose, write_trace_csv, DecomposeOptions, Decomposition, TraceRow};
pub use loss::{l1_target_loss, total_loss, tv_loss, tv_loss_of, LossConfig};
pub use objective::{Evaluation, Objective};
