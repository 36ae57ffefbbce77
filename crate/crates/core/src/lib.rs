pub mod autodiff;
pub mod benchbuild;
pub mod config;
pub mod encoder;
pub mod error;
pub mod meta;
pub mod synthetic;
pub mod graph;
pub mod tudataset;
pub mod verify;
pub mod views;

pub use error::{Error, Result};
