//! Differentiable spherical-Gaussian appearance engine for stylizing fixed
//! triangle meshes.

pub mod diff;
pub mod sg;
pub mod geometry;
pub mod appearance;
pub mod imageio;
pub mod lighting;
pub mod optimization;
pub mod renderer;
pub mod style;
