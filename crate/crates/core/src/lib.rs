//! Discovery and categorization of emergent behaviors in computation-free
//! robot swarms.

pub mod behavior;
pub mod config;
pub mod controller;
pub mod discovery;
pub mod error;
pub mod hil;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod render;
pub mod sim;

pub use error::{Error, Result};
