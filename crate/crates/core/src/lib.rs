//! Ergodic optimization and zero-temperature experiments for geodesic flows
//! on hyperbolic Schottky surfaces.

pub mod cache;
pub mod config;
pub mod demo;
pub mod ergopt;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod geometry;
pub mod group;
pub mod report;
pub mod sum;
pub mod thermo;

pub use error::{Error, Result};
