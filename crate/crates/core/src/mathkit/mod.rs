//! Special functions and keyed random streams shared by the rest of the crate.

mod rng;
mod special;

pub use rng::{sample_complex_gaussian, sample_real_gaussian, Lane, RngStream, StreamRng};
pub use special::{exp_integral_e1, EULER_GAMMA};
