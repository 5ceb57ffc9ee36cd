//! Cross-silo federated learning simulator with centralized and shallow-model
//! benchmarks.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`]: dense / LSTM / dropout layers over a flat parameter vector with
//!   exact reverse-mode gradients.
//! * [`optim`]: SGD, Adam, the FedAdam server optimizer and the staircase
//!   learning-rate schedule.
//! * [`train`]: the epoch loop shared by centralized training and client-side
//!   local updates.
//! * [`fl`]: client partitioning, local updates, weighted aggregation and the
//!   round loop.
//! * [`data`]: ingestion, preprocessing, windowing, splitting and the seeded
//!   dataset generators.
//! * [`baselines`]: OLS, k-NN, CART, random forest, gradient boosting and
//!   random-search hyperparameter optimization.
//! * [`eval`]: metrics, the cross-validation driver and relative-loss tables.
//! * [`experiment`]: declarative experiment configs and the runners that turn
//!   them into report files.
//!
//! Parallelism is provided by rayon behind the default `parallel` feature.
//! Every parallel section reduces in a fixed order, so results do not depend
//! on the thread count.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod fl;
pub mod nn;
pub mod optim;
pub mod par;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
