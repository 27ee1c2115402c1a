//! Spiking nonnegative similarity matching.
//!
//! An online unsupervised learner whose outputs are the time-averaged spike
//! trains of a network of integrate-and-fire units. For every input the
//! network settles on the minimizer of a per-sample nonnegative elastic-net
//! objective; Hebbian, anti-Hebbian and homeostatic local updates then move
//! the feedforward weights, lateral weights/thresholds and biases.
//!
//! Three interchangeable inner solvers are provided: the spiking network
//! ([`snn`]), the analogue rate dynamics it converges to ([`aunn`]) and an
//! exact coordinate-descent oracle ([`oracle`]) used for verification.

// `!(x > 0.0)` style guards are intentional: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aunn;
pub mod bench;
pub mod data;
pub mod error;
pub mod learning;
pub mod objective;
pub mod oracle;
pub mod persist;
pub mod render;
pub mod snn;
pub mod tuning;
pub mod types;

pub use error::{NsmError, Result};
pub use learning::{LearningSchedule, Solver, TrainLog, TrainOptions};
pub use objective::{activation, batch_optima, eval_h, eval_l, eval_nsm_cost, relative_error};
pub use types::{Dataset, EarlyStop, Hyperparams, OutputRates, ResetRule, SolverConfig, SynapticState};
