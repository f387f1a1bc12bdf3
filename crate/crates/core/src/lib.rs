//! Guidance engine for view sampling: semantic sphere proxies for angular
//! coverage and an occupancy grid for spatial coverage.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the network or a wall clock lives in the companion `vsg` crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod detection;
pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod grid;
mod math;
pub mod scoring;
pub mod session;
pub mod sim;
pub mod state;
pub mod sphere;

pub use error::Error;
pub use geometry::{Intrinsics, Pose, Vec3, ViewFrustum};

pub type Result<T, E = Error> = core::result::Result<T, E>;
