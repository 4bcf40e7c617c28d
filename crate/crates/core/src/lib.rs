//! One-point densities of Arratia flows with bounded drift.
//!
//! The density p_t(x) of the coalescing point process is computed by four
//! independent routes that are cross-checked against each other and against
//! closed forms:
//!
//! * [`series`]: the Duhamel expansion of the two-particle survival function
//!   around the drift-free killed heat kernel,
//! * [`pde`]: an explicit finite-difference solve of the killed backward
//!   equation on the wedge,
//! * [`mc_exit`]: exit-time Monte Carlo of the two-particle diffusion,
//! * [`flow`]: direct simulation of the coalescing flow.
//!
//! [`oracle`] holds the closed forms, [`harness`] the CLI and experiments.

pub mod drift;
pub mod error;
pub mod estimate;
pub mod flow;
pub mod harness;
pub mod kernel;
pub mod mc_exit;
pub mod oracle;
pub mod pde;
pub mod quad;
pub mod rng;
pub mod series;

pub use drift::DriftSpec;
pub use error::{Error, Result};
pub use estimate::{DensityEstimate, EstimateFlag, Method};
pub use kernel::{KernelBoundConstants, RotatedCoords, WedgePoint};
