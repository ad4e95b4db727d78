//! Fault attribution for compound, black-box component pipelines.
//!
//! A pipeline is modeled as a state machine whose states wrap opaque
//! components (detectors, classifiers, OCR engines, ...). The library
//! executes the pipeline over an original input and over perturbed
//! variants of it, records every component invocation in a trace tree,
//! checks per-component metamorphic relations across aligned trace
//! pairs, and aggregates the outcomes into failure-contribution counts
//! and normalized attribution weights that point at the component most
//! responsible for end-to-end failures.
//!
//! The crate is organized bottom-up:
//!
//! - [`payload`]: the values exchanged between components.
//! - [`metamorphic`]: metric kernels and composite relations.
//! - [`pipeline`]: the state-machine model, validation, and execution.
//! - [`trace`]: trace trees, structural alignment, and scoring.
//! - [`attribution`]: failure-contribution accumulation and weights.
//! - [`perturb`]: seeded input perturbations.
//! - [`mocks`]: configurable stand-in components for testing.
//!
//! Counting is integer-exact everywhere; the final normalization is
//! generic over the scalar type so callers can pick floating point for
//! reporting or arbitrary-precision rationals for exact cross-checks.

pub mod attribution;
pub mod error;
pub mod hashing;
pub mod metamorphic;
pub mod mocks;
pub mod payload;
pub mod perturb;
pub mod pipeline;
pub mod scalar;
pub mod trace;

pub use error::{Error, Result};

/// Default scalar for reports and thresholds.
pub type Real = f64;

/// Exact scalar used where bit-for-bit arithmetic checks matter.
pub type Rational = num_rational::BigRational;

/// Axis-aligned box over the default scalar.
pub type BBox = payload::BoundingBox<Real>;
