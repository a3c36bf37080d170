//! Assignment and pricing for a mobility-as-a-service platform that buys
//! capacity from transit and on-demand operators and sells OD-based trips.

pub mod bilevel;
pub mod cost;
pub mod equilibrium;
pub mod error;
pub mod linalg;
pub mod network;
pub mod nonfinite;
pub mod paths;
pub mod pipeline;
pub mod pricing;
pub mod report;
pub mod verification;

pub use error::{MaasError, Result};
