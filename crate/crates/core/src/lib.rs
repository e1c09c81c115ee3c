//! Teacher-student self-training with future-looking EMA teachers.
//!
//! The crate bundles a small tape-based autodiff engine ([`graph`]), two
//! model families ([`models`]), synthetic tasks ([`tasks`]), the baseline
//! self-training step ([`selftrain`]), the future-teacher variants ([`fst`]),
//! evaluation metrics ([`metrics`]), and a reproducible experiment runner
//! ([`harness`]).

pub mod error;
pub mod exact;
pub mod fst;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod params;
pub mod selftrain;
pub mod tasks;
pub mod tensor;

pub use error::{Error, Result};
pub use fst::{train_step, ExplorationBatchSet, VirtualState};
pub use graph::{Graph, NodeId};
pub use models::{build, InputShape, Model, ModelKind, ModelSpec};
pub use params::{Layout, ParamVector};
pub use selftrain::{
    BatchMode, LambdaPolicy, StepOutcome, StudentState, TeacherState, TrainerConfig, Variant,
    WideReduction,
};
pub use tasks::{Batch, BatchSampler, TaskData, TaskKind, TaskSpec};
pub use tensor::Tensor;
