pub mod cascade;
pub mod dataset;
pub mod elastic;
pub mod error;
pub mod physnet;
pub mod trainer;
pub mod voxel;

pub use error::{Error, Result};
