pub mod autodiff;
pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod tasks;
pub mod train;

pub use autodiff::{AdError, NodeRef, Tape};
pub use model::{Model, ModelConfig, ModelKind};
pub use tasks::{TaskKind, TaskSample};
pub use train::{TrainConfig, Trainer};
