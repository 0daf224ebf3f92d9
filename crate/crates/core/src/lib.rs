pub mod dnorm;
pub mod error;
pub mod exceedance;
pub mod gpd;
pub mod matrix;
pub mod optimize;
pub mod pipeline;
pub mod pseudo;
pub mod rng;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use matrix::Matrix;
