//! Return-method boundary control of 2D ideal incompressible MHD in a duct.

pub mod cli;
pub mod config;
pub mod controller;
pub mod data;
pub mod elsasser;
pub mod error;
pub mod fields;
pub mod flow;
pub mod geometry;
pub mod glue;
pub mod plot;
pub mod solvers;
pub mod verify;

pub use error::{Error, Result};
