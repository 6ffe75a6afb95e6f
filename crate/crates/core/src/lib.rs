//! Core algorithms of the shuffle-attention toolkit: the NCHW tensor
//! substrate, the grouped two-branch attention module with channel shuffle,
//! tape-based reverse-mode differentiation certified by central differences,
//! parameter/flop accounting for residual backbones, and a desk-scale
//! trainer.
//!
//! The crate is `no_std`-compatible (allocator required); the `std` feature
//! only adds `std::error::Error` for the error type. All floating-point
//! special functions go through `libm` in both modes so results are
//! bit-identical regardless of features.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attention;
pub mod cost;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod reference;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod toynet;
pub mod train;

pub use attention::{sa_forward, se_forward, FcVariant, SaConfig, SaParams, SeParams};
pub use cost::{report, AttentionKind, CostReport, FlopCount, ModelDescriptor, StageSpec};
pub use error::{Error, Result};
pub use gradcheck::{finite_difference, gradcheck_sa, GradCheckReport};
pub use rng::Rng;
pub use tape::{Gradients, Tape, ValueId};
pub use tensor::{Shape, Tensor4};
