//! Fixed-step time-domain simulator of grid-connected converters running
//! dual-sequence grid-forming vector current control, with fault ride-through
//! strategies, negative-sequence controllers and a scenario-driven harness.

pub mod control;
pub mod error;
pub mod filters;
pub mod frames;
pub mod plant;
pub mod sim;

pub use error::{Error, Result};
pub use frames::{SequencePair, ThreePhase, Vec2};
