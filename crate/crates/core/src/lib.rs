//! Attention-gated capture for smart glasses: an always-on gaze gate that
//! wakes a scene-aware fusion classifier, which in turn decides whether to
//! record a short video snippet.

pub mod cli;
pub mod corpus;
pub mod energy;
pub mod error;
pub mod fusion;
pub mod gate;
pub mod io;
pub mod metrics;
pub mod oculomotor;
pub mod pipeline;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
