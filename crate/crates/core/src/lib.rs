//! Simulation workbench for closed-loop control of direct ink writing.
//!
//! The crate is organised bottom-up:
//!
//! - [`geom`]: slicing, outline offsetting, zig-zag infill and target rasterization.
//! - [`fluid`]: position-based fluid deposition simulator with a pressure-driven emitter.
//! - [`noise`]: Burg autoregressive flow-noise model and pressure schedules.
//! - [`env`]: the control MDP (observations, actions, rewards, episodes).
//! - [`policy`]: baseline calibration, scripted controllers and CNN inference.
//! - [`eval`]: average offset, deposition histograms, infill uniformity and benchmarks.
//!
//! Units are millimetres and seconds throughout unless a name says otherwise.

pub mod env;
pub mod eval;
pub mod fluid;
pub mod geom;
pub mod noise;
pub mod policy;

pub use glam::{DVec2, DVec3};
