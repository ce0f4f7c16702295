//! Policy-gradient methods for continuous-time linear-quadratic regulation,
//! with Lyapunov solvers, gradient estimators and an emulated cost model for
//! block-encoded linear algebra.

pub mod bench;
pub mod encoding;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod optimizer;
pub mod rng;

pub use error::{Error, ErrorKind, Result};
