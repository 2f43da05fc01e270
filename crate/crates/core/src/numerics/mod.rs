//! Dense tensors, seeded randomness and the `TNSR` binary tensor encoding.

mod matmul;
mod real;
mod rng;
mod tensor;
pub mod tnsr;

pub use matmul::{gemm, gemm_nt, matmul, transpose};
pub use real::Real;
pub use rng::{mix_seed, Rng};
pub use tensor::{ShapeError, Tensor};
