//! Pure-computation core of the airfoil diffusion toolkit: geometry,
//! the panel-method aerodynamic oracle, the diffusion model, its trainer,
//! and evaluation statistics. Needs only `alloc`.
#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod aero;
pub mod checkpoint;
pub mod denoiser;
pub mod diffusion;
pub mod eval;
pub mod geometry;
mod nn;
pub mod spline;
pub mod trainer;
