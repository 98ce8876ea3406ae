pub mod density_stats;
pub mod error;
pub mod grid;
pub mod localization;
pub mod moment_kernel;
pub mod noise_initial;
pub mod quadrature;
pub mod spde_solver;
pub mod special_fn;
pub mod stable_kernel;

pub use error::{Error, Result};
