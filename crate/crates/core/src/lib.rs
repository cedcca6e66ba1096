//! Test of elliptical symmetry based on the Kullback–Leibler divergence
//! between the joint law of radius and direction and the product of the
//! radius law with the uniform law on the sphere.
//!
//! Building blocks: small dense symmetric-matrix routines, exact kNN
//! distances, weighted Kozachenko–Leonenko entropy estimates, a 1-D Gaussian
//! kernel density, the simulation settings, and a Monte Carlo harness.

pub mod data;
pub mod ellip;
pub mod entropy;
pub mod error;
pub mod generators;
pub mod io;
pub mod kde;
pub mod knn;
pub mod matrix_ops;
pub mod seed;
pub mod simharness;

pub use data::Dataset;
pub use ellip::{run_test, Mode, TestConfig, TestResult, VarianceMode};
pub use error::{Error, Result};
