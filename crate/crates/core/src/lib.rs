//! Interpretable fuzzy ODE models for nonlinear system identification.
//!
//! The crate implements additive fuzzy ODE dynamics (xFODE) whose single-input
//! fuzzy blocks use partitioned antecedents, the AFODE and FODE fuzzy
//! baselines, multi-step rollout training with hand-written reverse-mode
//! gradients, and a small benchmark harness.
//!
//! Data flows through the modules in this order:
//!
//! * [`dataset`] loads and z-score normalizes measured input/output records.
//! * [`state_repr`] turns outputs into lagged or incremental states and cuts
//!   rollout windows.
//! * [`membership`] decodes unconstrained antecedent parameters into
//!   membership functions.
//! * [`fuzzy`] evaluates the TSK fuzzy dynamics and their vector-Jacobian
//!   products.
//! * [`rollout`] integrates the dynamics forward, [`training`] fits them.
//! * [`evaluation`] runs multi-seed benchmarks and exports membership curves.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fuzzy;
pub mod membership;
pub mod model_io;
pub mod rollout;
pub mod state_repr;
pub mod synthetic;
pub mod training;

pub use dataset::{NormStats, RawDataset};
pub use error::{Error, Result};
pub use fuzzy::{Dynamics, FuzzyModel, ModelKind};
pub use membership::{AntecedentChain, DecodedMfs, Strategy};
pub use state_repr::{StateConfig, StateMode, TrajectorySet};
pub use training::{TrainConfig, TrainRun};
