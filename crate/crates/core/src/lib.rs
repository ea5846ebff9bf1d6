// Negated comparisons are used on purpose so that NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bos;
pub mod engine;
pub mod error;
pub mod grin;
pub mod math;
pub mod optics;
pub mod pgm;
pub mod raygen;
pub mod rng;
pub mod scene;
pub mod sensor;

pub use error::{Error, Result};
pub use math::Vec3;
