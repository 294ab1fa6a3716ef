//! Batch crystallization control workbench.

pub mod config;
pub mod container;
pub mod controllers;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod lstm;
pub mod plant;

pub use error::{Error, Result};
