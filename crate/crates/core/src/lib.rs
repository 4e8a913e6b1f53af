//! Simulation of a multi-camera optical tactile fingertip together with the
//! learning pipelines that estimate contact state from its images.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod contact;
pub mod datasets;
pub mod demo;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod imageio;
pub mod learn;
pub mod optics;
pub mod seed;
pub mod sensor;
pub mod tasks;

pub use error::{DatasetError, Error, Result};
pub use grid::Grid;
