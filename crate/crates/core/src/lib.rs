pub mod autodiff;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod graphbuild;
pub mod hyperlayer;
pub mod manifold;
pub mod trainer;
pub mod typer;

pub use error::{Error, Result};
