pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pointcloud;
pub mod registry;
pub mod training;

pub use error::{Error, Result};
pub use pointcloud::{Point3, PointCloud};
