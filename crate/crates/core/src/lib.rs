//! Face obscuration methods and an attack harness that measures how much
//! identity each method leaks.

pub mod config;
pub mod dataset;
pub mod dct;
pub mod error;
pub mod filters;
pub mod harness;
pub mod ksame;
pub mod raster;
pub mod recognition;

pub use error::{Error, Result};
pub use raster::{ColorSpace, Image};
