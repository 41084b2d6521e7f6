pub mod completion;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod sdp;

pub use error::{Error, Result};
