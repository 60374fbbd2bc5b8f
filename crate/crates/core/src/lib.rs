//! Robust functional principal component analysis by projection pursuit.
//!
//! Curves are sampled on an equispaced grid ([`grid`]). Principal directions
//! maximize a robust scale ([`scale`]) of the projected sample over a finite
//! candidate set ([`projpursuit`]), optionally smoothed through a roughness
//! penalty ([`penalty`]) or restricted to a basis span ([`sieve`]).
//! Smoothing parameters are chosen by robust cross-validation
//! ([`crossval`]); [`simulate`] holds the contamination experiments.

pub mod center;
pub mod cli;
pub mod crossval;
pub mod error;
pub mod grid;
pub mod penalty;
pub mod projpursuit;
pub mod scale;
pub mod sieve;
pub mod simulate;

pub use center::Centering;
pub use error::{Error, Result};
pub use grid::{Curve, FunctionalSample, Grid, Metric};
pub use projpursuit::{fit, Mode, PCFit, PPConfig};
pub use scale::{Location, ScaleKind, ScaleSpec};
pub use sieve::{BasisKind, BasisSpec};
