//! Kinetic Langevin samplers with stochastic and sweeping minibatch gradients.

pub mod calibrate;
pub mod couple;
pub mod dataset;
pub mod diagnose;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod model;
pub mod noise;
pub mod runner;
pub mod sample;
pub mod sgrad;

pub use error::{Error, Result};
