//! Tensor-train decomposition of tensors whose mode-N fibers are either fully
//! observed or entirely missing, using only SVDs and least squares.
//!
//! [`completion::complete`] is the entry point; [`pattern::validate`] screens an
//! observation pattern before any numerical work.

// `!(x > tol)` is used on purpose so that NaN fails threshold checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod error;
pub mod harness;
pub mod io;
mod exec;
pub mod numlin;
pub mod pattern;
pub mod subspace;
pub mod tensor;
