//! Datasets, metrics, training loops, checkpoints and numerical self-checks
//! around the `tagi` library.

pub mod bench;
pub mod checkpoint;
pub mod crosscov;
pub mod data;
pub mod error;
pub mod gan_train;
pub mod joint;
pub mod metrics;
pub mod train;
pub mod verify;

pub use error::{HarnessError, Result};
