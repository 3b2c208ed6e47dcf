//! Score-based diffusion samplers for linear forward SDEs, Wasserstein error
//! bounds, iteration-complexity prescriptions, and an isotropic Gaussian oracle
//! that makes every quantity checkable in closed form.

pub mod bounds;
pub mod cli;
pub mod complexity;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod metrics;
pub mod quad;
pub mod sampler;
pub mod schedule;
pub mod search;

pub use bounds::{BoundContext, BoundReport};
pub use error::{Error, Result};
pub use gaussian::{GaussianModel, KSearch, VarianceTrace};
pub use schedule::{Family, KernelParams, ScheduleSpec};
