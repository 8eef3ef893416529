//! Full-batch gradient descent on overparameterised shallow networks, with
//! empirical audits of stability, generalisation, optimisation-error and
//! neural-tangent-kernel bounds.

pub mod bounds;
pub mod data;
pub mod error;
pub mod experiments;
pub mod model;
pub mod ntk;
pub mod numerics;
pub mod optimize;
pub mod seeds;
pub mod stability;

pub use error::{Error, Result};
