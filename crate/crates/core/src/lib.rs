#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combinatorics;
pub mod experiments;
pub mod kernel;
pub mod moments;
pub mod povzner;
pub mod quadrature;
pub mod scalar;
pub mod simulator;
pub mod vec3;
pub mod verify;

pub use kernel::{KernelError, KernelParams};
pub use moments::{Ensemble, MomentTable};
pub use scalar::Real;
pub use vec3::Vec3;

pub type Velocity = Vec3<f64>;
