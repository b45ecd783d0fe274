//! Simulation of spin-1/2 particles in a non-ideal Stern-Gerlach device with
//! half-plane post-selection, and the no-signalling bookkeeping built on it.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod grid;
pub mod postselect;
pub mod protocol;
pub mod quadrature;
pub mod spin;
pub mod wavepacket;

pub use error::{Error, Result};
