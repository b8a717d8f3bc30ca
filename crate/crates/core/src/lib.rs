//! Core numerics for mechanical systems driven by external forces.
//!
//! Everything here works in explicit local coordinates: scalar fields are
//! defined by a small expression language (or by closures) over a named
//! chart, differentiated exactly to second order, and assembled into
//! phase-space dynamics with force covectors on the momentum side or force
//! semibasic forms on the velocity side. On top of that sit generating-
//! function checks for candidate invariant sections, transport of those
//! candidates across the fiber derivative, fixed-step integration helpers,
//! and two reduction constructions (translation symmetry groups and
//! constrained systems with a principal connection).
//!
//! The crate is `no_std` (with `alloc`); the companion CLI crate carries
//! all IO.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod chart;
pub mod error;
pub mod expr;
pub mod field;
pub mod flows;
pub mod geometry;
pub mod hamiltonian;
pub mod hj;
pub mod jet;
pub mod lagrangian;
pub mod linalg;
pub mod reduction;
pub mod sample;

pub use chart::{Chart, FiberKind};
pub use error::{Error, ParseError, ParseErrorKind, Pos, Result};
pub use field::{MatrixField, ScalarField};
pub use sample::SampleBox;
