//! Numerical laboratory for orthogonal approximate message passing (OAMP) on
//! unitarily invariant linear systems `y = A x + w`.
//!
//! The crate covers the spectral transfer functions and fixed point of the
//! detector's state evolution, replica capacity computed along two routes,
//! the areas of the transfer-curve diagram, the detector itself, and LDPC
//! coding for coded runs.

pub mod capacity;
pub mod channel;
pub mod error;
pub mod ldpc;
pub mod numeric;
pub mod oamp;
pub mod scalar_denoiser;
pub mod seed;
pub mod sim;
pub mod spectral_transforms;
pub mod state_evolution;

pub use channel::{
    apply_channel, make_kappa_spectrum, sample_channel, sample_channel_with, ChannelInstance, ChannelSpectrum,
    Rotation, RotationMethod,
};
pub use error::{Error, Interval, Result};
pub use scalar_denoiser::{Constellation, Posterior, Prior};

/// Version string written into CSV headers and run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
