//! Dense matrices, a reverse-mode tape, a finite-difference oracle, parameter
//! initialization and Adam.

mod adam;
mod finite_diff;
mod init;
mod matrix;
mod params;
mod tape;

pub use adam::{AdamConfig, OptimizerState};
pub use finite_diff::{finite_diff_gradients, max_relative_error};
pub use init::{init_params, standard_normal, uniform_index, unit_f64, InitScheme};
pub use matrix::DenseMatrix;
pub use params::{GradientMap, ParamId, ParamStore, Parameter};
pub use tape::{activation, gradients, masked_loss, observed_columns, sigmoid, Activation, Adjoints, Tape, Var};
