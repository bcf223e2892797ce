//! Design and metrology toolkit for superconducting nanowire single-photon
//! detectors (SNSPDs).
//!
//! The crate covers two halves of the same workflow:
//!
//! - **Cavity optics**: dispersion tables and an effective-medium model of
//!   the nanowire meander ([`materials`]), a normal-incidence transfer-matrix
//!   solver ([`tmm`]) and air-gap sweeps, peak finding and gap optimization
//!   ([`cavity`]).
//! - **Measurement analysis**: photon flux from attenuated laser power and
//!   system detection efficiency with its uncertainty budget ([`metrology`]),
//!   dead-time metrics and count-rate dependent efficiency ([`dynamics`]),
//!   and a seeded time-tag simulator with auto-correlation and IRF jitter
//!   analyses ([`timetag`]).
//!
//! Units are stated in every field name: wavelengths and thicknesses in nm,
//! detector times in ns, jitter in ps, optical power in W and rates per second.

// Range checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cavity;
pub mod dynamics;
pub mod error;
pub mod materials;
pub mod metrology;
pub mod timetag;
pub mod tmm;

pub use error::{Error, ErrorKind, Result};
