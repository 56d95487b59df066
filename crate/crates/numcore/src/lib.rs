//! Numerical core: dense tensors, a reverse-mode gradient tape with an
//! extension point for fused ops, seeded randomness and a finite-difference
//! gradient checker.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod real;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use gradcheck::{grad_check, grad_check_inputs, grad_check_params, GradCheckOptions, GradCheckReport};
pub use graph::{fault_injection_enabled, set_fault_injection, CustomOp, Graph, Var};
pub use params::{Param, ParamId, ParamStore};
pub use real::{gemm, Real};
pub use rng::{derive_seed, Rng};
pub use tensor::Tensor;
