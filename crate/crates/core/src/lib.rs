pub mod bench;
pub mod cli;
pub mod dictionary;
pub mod error;
pub mod fourier;
pub mod io;
pub mod lasso;
pub mod metrics;
pub mod linalg;
pub mod model;
pub mod sema;

pub use error::{Error, Result};
