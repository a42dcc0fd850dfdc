//! Mean field equation machinery on flat tori with finite translation
//! symmetry.
//!
//! The crate provides the numerical core for studying the mean field
//! equation on a flat torus under a finite group of translations: exact
//! Green functions built from rapidly converging product expansions,
//! symmetrized Green functions and their local expansions, Sobolev
//! gradient minimization of the Moser-Trudinger functional on the
//! invariant mean-zero subspace, blow-up diagnostics against the
//! classified entire bubble, and machine-checkable existence
//! certificates with explicit constants.

pub mod blowup;
pub mod certify;
pub mod error;
pub mod field;
pub mod green;
pub mod solve;
pub mod spectral;
pub mod torus;

pub use blowup::BubbleDiagnostics;
pub use certify::{series_bounds, CertificateReport, TestEnergyRow, TestFunctionFamily};
pub use error::{MeanFieldError, Result};
pub use field::GridField;
pub use green::{GreenExpansion, GreenFunction, LambdaSeries};
pub use solve::{MinimizerState, ProblemSpec};
pub use spectral::SpectralPlan;
pub use torus::{Point, TorusLattice, TranslationGroup};
