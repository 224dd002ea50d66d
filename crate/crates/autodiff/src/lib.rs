//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s; calling
//! [`Tape::backward`] on a scalar sweeps the tape in reverse and returns
//! [`Gradients`] for every leaf created with [`Tape::param`].
//!
//! ```
//! use tride_autodiff::{Tape, Tensor};
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.param(Tensor::from_f64(vec![3], &[1.0, 2.0, 3.0]).unwrap());
//! let loss = x.mul(x).unwrap().sum();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[2.0, 4.0, 6.0]);
//! ```

mod backward;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod init;
mod kernels;
pub mod optim;
pub mod suite;
mod real;
mod tape;
mod tensor;

pub use backward::Gradients;
pub use error::{AdError, Result};
pub use gradcheck::{grad_check, grad_check_inputs, relative_error, GradCheckOptions, GradCheckReport};
pub use kernels::{adaptive_bucket, ConvGeom};
pub use optim::{adam_step, poly_lr, AdamConfig, AdamState};
pub use real::Real;
pub use tape::{lstm_cell, LstmWeights, PrimitiveKind, Tape, Var};
pub use tensor::Tensor;
