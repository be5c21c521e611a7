//! Equivariant multi-view aggregation over finite rotation groups.
//!
//! Views of an object taken from group-structured camera poses form a signal
//! on a finite subgroup of SO(3) (or on one of its homogeneous spaces). The
//! group and space convolutions in [`signal`] are equivariant to the group
//! action, and [`mvnet`] stacks them into a network whose pooled descriptor
//! is invariant to rotations of the object by group elements.

pub mod audit;
pub mod cli;
pub mod conv2d;
pub mod error;
pub mod experiment;
pub mod group;
pub mod hspace;
pub mod io;
pub mod mvnet;
pub mod polar;
pub mod signal;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod views;
pub mod viz;

pub use error::{Error, Result};
