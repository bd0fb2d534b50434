//! Homogenization toolkit for perforated domains with random holes.
//!
//! The crate samples random inclusion geometries, rasterizes them onto a periodic grid,
//! solves the massive corrector problems on the matrix, and measures how fast the
//! resulting homogenized coefficients and two-scale expansions converge.

pub mod cli;
pub mod corrector;
pub mod elliptic;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod quantify;
pub mod stats;
pub mod twoscale;

mod fft;

pub use error::{Error, Result};
