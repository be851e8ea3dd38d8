//! Spec-driven code synthesis: behavioral headers on Python stubs are turned
//! into validated, cached and spliceable implementations by a pluggable
//! completion backend and a generate / validate / repair loop.

pub mod error;
pub mod header;
mod pyast;
pub mod backends;
pub mod bench;
pub mod cache;
pub mod engine;
pub mod prompting;
pub mod spec;
pub mod splice;
pub mod validation;

pub use error::{BackendError, Error, Result, SynthesisFailure};
