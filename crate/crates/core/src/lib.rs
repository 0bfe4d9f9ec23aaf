//! Numerical laboratory for Gevrey-weighted energies of the defocusing
//! generalized KdV and nonlinear Schrödinger equations.

pub mod error;
pub mod evolution;
pub mod extension;
pub mod fit;
pub mod fre;
pub mod multiplier;
pub mod sampling;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};
pub use evolution::{Equation, EvolutionConfig, InitialData};
pub use extension::{ExtensionParams, NlsExponent};
pub use fre::{Entry, FreConfig, FreReport, PhaseSpec};
pub use spectral::{Grid, SpectralField};
pub use weights::{Weight, WeightKind};
