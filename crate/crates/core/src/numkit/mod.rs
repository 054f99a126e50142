//! Small deterministic numerical substrate: dense matrices, counter-based
//! random streams, singular values and the imaginary error function.

mod erfi;
mod matrix;
mod rng;
mod svd;

pub use erfi::{erfi, ERFI_DOMAIN};
pub use matrix::Matrix;
pub use rng::{Dist, RngStream};
pub use svd::svd_values;
