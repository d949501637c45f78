pub mod aggregate;
pub mod bench;
pub mod config;
pub mod demo;
pub mod error;
pub mod gradcheck;
pub mod kernelmap;
pub mod linalg;
pub mod pipeline;
pub mod pn;
pub mod probmodel;
pub mod spectral;
pub mod synth;
pub mod tensorfile;
pub mod verify;

pub use error::{Error, Result};
