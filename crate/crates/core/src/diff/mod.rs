//! Reverse-mode differentiation over scalar expression graphs.

mod dual;
mod scalar;
mod tape;
mod vec3;

pub use dual::{partials2, Dual2};
pub use scalar::Scalar;
pub use tape::{sigmoid, softplus, softplus_inverse, DiffError, Tape, Var};
pub use vec3::{Rgb, Vec3, NORM_EPSILON, V3};
