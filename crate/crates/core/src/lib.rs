//! Trains fixed-width ReLU networks of increasing depth on closed-form test
//! functions and measures how well they approximate them in the sup-norm.
//!
//! The pieces, bottom up:
//!
//! - [`functions`]: Ackley, Rosenbrock and Borehole with default domains.
//! - [`sampling`]: inclusive grids and min-max normalization.
//! - [`network`]: dense ReLU networks, backpropagation and a
//!   finite-difference gradient oracle.
//! - [`optimizer`]: Adam and the mini-batch training loop.
//! - [`experiment`]: multi-restart cells, the width x depth sweep,
//!   checkpoint/resume and the `.dat` emitters.
//! - [`gradcheck`]: the randomized backprop-vs-finite-difference suite.

// `!(x > lo)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiment;
pub mod format;
pub mod functions;
pub mod gradcheck;
pub mod network;
pub mod optimizer;
pub mod sampling;

pub use error::{Error, Result};
pub use experiment::{
    derive_seed, emit_error_table, emit_surface, run_cell, run_sweep, run_sweep_with, sup_error,
    CellResult, ErrorTable, ExperimentConfig, Problem, SweepOptions, SweepResult,
};
pub use functions::{lookup, Domain, TestFunction};
pub use network::{GradientSet, LayerStack, NetworkParameters, NetworkSpec};
pub use optimizer::{adam_step, train_epochs, AdamConfig, AdamState};
pub use sampling::{build_dataset, denormalize, grid, Dataset, NormStats};
