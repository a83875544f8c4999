//! Simulation and analysis of discrete-time single-species population models
//! `X[t+1] = f(X[t], xi[t+1]) X[t]` with i.i.d. environments and Allee effects.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::redundant_guards)]

pub mod criteria;
pub mod engine;
pub mod env;
pub mod error;
pub mod experiments;
pub mod fitness;
pub mod io;
pub mod numerics;
pub mod skeleton;

pub use env::{EnvDistribution, SampleStream, SeedSpec};
pub use error::{Error, Result};
pub use fitness::{EnvDraw, FamilyKind, ModelSpec, MonotonicityClass};
