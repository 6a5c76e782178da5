//! Small deterministic CNN engine with per-layer freezing.

mod arch;
mod engine;
mod gemm;
mod gradcheck;
mod params;

pub use arch::{Layer, ModelArch, Shape};
pub(crate) use engine::{argmax_rows, forward_raw, loss_and_grad_raw};
pub use engine::{forward, loss_and_grad, predict};
pub use gradcheck::{finite_diff_check, random_batch, GradCheckReport, DEFAULT_SAMPLES, FD_STEP};
pub use params::{
    count_params, init_params, sgd_step, sgd_step_in_place, FreezeMask, LayerCount, LayerParams,
    ParamCounts, ParamSet,
};
