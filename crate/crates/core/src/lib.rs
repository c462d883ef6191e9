//! Compressed Green's-function tensors for FFT-accelerated volume integral
//! equation solvers.

pub mod assembly;
pub mod container;
pub mod decomp;
pub mod error;
pub mod fft_operator;
pub mod mie;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{FactorMatrix, Mode, Tensor3};
