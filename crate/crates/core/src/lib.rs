//! Joint action and interaction recognition for pastured cattle, with
//! GPS-based identity association.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod encoders;
pub mod evaluation;
pub mod error;
pub mod image;
pub mod losses;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
