//! Dynamics of the Chaplygin sphere.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod fields;
pub mod geom;
pub mod hyperel;
pub mod integrate;
pub mod model;
pub mod reduction;
pub mod vecrot;
