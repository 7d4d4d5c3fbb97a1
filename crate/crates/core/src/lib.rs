//! Fisher-information memory capacity of matrix-representation recurrent
//! systems, with and without a queue memory.

pub mod error;
pub mod fmc;
pub mod gaussian;
pub mod linalg;
pub mod memory;
pub mod par;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};
pub use fmc::{FmcSeries, LinearMatrixDynamics, VectorDynamics};
pub use gaussian::MatrixGaussian;
pub use linalg::Mat;
pub use memory::MemoryAugmentedDynamics;
pub use rng::SeededRng;
