use alloc::string::String;
use core::fmt;

use crate::tensor::Shape;

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors produced by tensor construction, module configuration, gradient
/// checking, and training.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A constructor received a zero dimension.
    ZeroDimension { name: &'static str },
    /// The dimension product overflows the address space.
    DimensionOverflow { n: usize, c: usize, h: usize, w: usize },
    /// Flat data length does not match the product of the dimensions.
    DataLength { expected: usize, got: usize },
    /// The channel count cannot be divided into the requested number of parts.
    NotDivisible { channels: usize, parts: usize },
    /// Two tensors that must agree on shape do not.
    ShapeMismatch { expected: Shape, got: Shape },
    /// A per-channel vector has the wrong length for the tensor it is applied to.
    LengthMismatch {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    /// The channel width is incompatible with the group configuration.
    InvalidGrouping { channels: usize, groups: usize },
    /// An operation received an empty list where at least one element is required.
    EmptyInput(&'static str),
    /// A tape id does not refer to a recorded value.
    UnknownValue { id: usize, tape_len: usize },
    /// A scalar probe returned a non-finite value during a numeric check.
    NonFiniteSample { context: &'static str, index: usize },
    /// The training loss left the finite range.
    NonFiniteLoss { epoch: usize, batch: usize },
    /// A configuration field holds an unusable value.
    InvalidConfig { field: &'static str, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ZeroDimension { name } => {
                write!(f, "dimension `{name}` must be positive")
            }
            Error::DimensionOverflow { n, c, h, w } => {
                write!(f, "dimension product {n}x{c}x{h}x{w} overflows")
            }
            Error::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape volume {expected}")
            }
            Error::NotDivisible { channels, parts } => {
                write!(f, "channel count {channels} is not divisible by {parts}")
            }
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::LengthMismatch {
                name,
                expected,
                got,
            } => {
                write!(f, "vector `{name}` has length {got}, expected {expected}")
            }
            Error::InvalidGrouping { channels, groups } => {
                write!(
                    f,
                    "channel count C={channels} is incompatible with G={groups} groups \
                     (C must be divisible by 2*G)"
                )
            }
            Error::EmptyInput(what) => write!(f, "{what} must not be empty"),
            Error::UnknownValue { id, tape_len } => {
                write!(f, "value id {id} is not on the tape (length {tape_len})")
            }
            Error::NonFiniteSample { context, index } => {
                write!(f, "non-finite value in {context} at coordinate {index}")
            }
            Error::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            Error::InvalidConfig { field, message } => {
                write!(f, "invalid config field `{field}`: {message}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
