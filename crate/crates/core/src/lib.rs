//! Benchmark artifact for low-rank motion style adapters in trajectory
//! forecasting.
//!
//! The crate is organized around a small reverse-mode autodiff engine
//! ([`diffcore`]), a modular forecasting model ([`forecastnet`]), low-rank
//! adapter plumbing ([`mosa`]), a synthetic grid world with controllable
//! style shifts ([`synthworld`]), training procedures ([`trainkit`]),
//! displacement metrics ([`metrics`]), and a file-based experiment harness
//! ([`harness`]) driven by the `mosa-bench` binary.
//!
//! Everything is deterministic: a 64-bit seed pins dataset generation,
//! parameter initialization, batch shuffling, and adapter injection, and all
//! iteration runs over ordered containers so repeated runs produce
//! byte-identical artifacts.

pub mod diffcore;
pub mod error;
pub mod forecastnet;
pub mod geom;
pub mod harness;
pub mod metrics;
pub mod mosa;
pub mod rng;
pub mod synthworld;
pub mod trainkit;

pub use error::{Error, Result};
