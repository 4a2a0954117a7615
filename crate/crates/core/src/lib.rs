//! Linearized Laplace approximations for small MLPs and subspace projectors.

pub mod curvature;
pub mod data;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod posterior;
pub mod predictive;
pub mod subspace;
pub mod train;

pub use error::{Error, Result};
