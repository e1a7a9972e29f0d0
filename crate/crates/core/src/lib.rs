//! Simulation and semiparametric estimation of planar segment processes whose
//! density with respect to a Poisson process involves a reference mark
//! distribution (of directions or of lengths).
//!
//! Two models are covered:
//!
//! * [`models::GibbsDirectionalModel`]: fixed-length segments with
//!   intersection inhibition and a reference direction density, fitted with
//!   Takacs–Fiksel equations ([`estimators::tf_fit`]).
//! * [`models::InhomogLengthModel`]: an inhomogeneous Poisson segment process
//!   in a disk with a reference length density, fitted by maximum likelihood
//!   ([`estimators::mle_fit`]).
//!
//! In both cases the scalar parameters are estimated first and the reference
//! density is then recovered nonparametrically from kernel estimates of the
//! observed (Palm) mark distribution.

pub mod error;
pub mod estimators;
pub mod geometry;
pub mod kde;
pub mod models;
pub mod numerics;
pub mod parallel;
pub mod samplers;

pub use error::{Error, Result};
pub use estimators::{mle_fit, tf_fit};
pub use geometry::{Configuration, DiskWindow, Point2, RectWindow, Segment, Window};
