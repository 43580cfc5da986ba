//! Spectral toolkit for a constrained curvature-prescription energy on flat
//! tori: the polyharmonic energy E(u) = integral u (-Delta)^(n/2) u, its
//! minimization over the set where a sign-changing weight has vanishing
//! exponential mass, and the concentration diagnostics used to track the
//! minimizers as the weight's zero set degenerates.
//!
//! Dimensions 2 and 4 are supported; all transforms run on uniform periodic
//! grids with power-of-two resolution. Reductions use fixed-shape pairwise
//! trees, so results are bit-identical between the parallel (default) and
//! sequential builds.

pub mod analytic;
pub mod bubble;
pub mod constraints;
pub mod continuation;
pub mod error;
pub mod fft;
pub mod grid;
pub mod minimizer;
pub mod par;
pub mod selfcheck;
pub mod spectral;

pub use error::{QcrvError, Result};
pub use grid::{ScalarField, TorusGrid};
