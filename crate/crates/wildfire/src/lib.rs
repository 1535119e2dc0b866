//! Two-equation wildfire spread model with data assimilation.
//!
//! The library couples a reaction-diffusion model for temperature and fuel
//! mass fraction (explicit finite differences, modified Arrhenius kinetics)
//! with a randomized-data ensemble Kalman filter that assimilates gridded
//! temperature and fuel observations into running simulations. Coefficients
//! are identified from observable fire behavior — equilibrium temperatures,
//! cooling time, and traveling-wave metrics — through a nondimensional
//! form with separated solution scales.

pub mod enkf;
pub mod ensemble;
pub mod error;
pub mod fields;
pub mod harness;
pub mod kinetics;
pub mod solver;
pub mod streams;

pub use error::{Error, Result};
pub use fields::{FireState, Grid};
pub use kinetics::{DiffusionMode, ModelCoefficients, NondimParams, Scales};
pub use solver::{Trajectory, WaveMeasurement, WaveMetrics};
