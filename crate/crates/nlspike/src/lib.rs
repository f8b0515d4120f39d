//! Integer-only, shift-add numerical kernels for spiking approximations of
//! Transformer nonlinearities, plus the experiment harness that verifies the
//! stated error bounds against high-precision oracles.
//!
//! The three primitives — a division neuron group, a CORDIC-tree Euclidean
//! norm, and a piecewise-linear exponential lookup unit — compose into
//! NLS-Softmax, NLS-SiLU, NLS-RMSNorm and NLS-LayerNorm. See the `nlspike`
//! binary for the experiment CLI.

pub mod fixedq;
pub mod spikecode;
pub mod divneuron;
pub mod pwlexp;
pub mod polarnorm;
pub mod nlsops;
pub mod baselines;
pub mod analysis;
pub mod opcount;
pub mod cli;

pub use fixedq::{QGrid, QValue};
pub use nlsops::NlsConfig;
