//! Minimization of the planar Landau-de Gennes energy over unit-trace
//! symmetric tensor fields with non-contractible projection-valued boundary
//! data, plus analysis of the single defect of the minimizers.

pub mod cli;
pub mod config;
pub mod defect;
pub mod error;
pub mod field;
pub mod minimizer;
pub mod psi;
pub mod selftest;
pub mod snapshot;
pub mod tensor;

pub use error::{AnalysisError, FieldError, SolveError, TensorError};
