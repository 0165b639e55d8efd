//! Compressed-sensing measurement of a classically driven cavity field.
//!
//! * [`signal`]: drive protocols, quadrature of the coherent amplitude, and
//!   its per-step increments.
//! * [`sensing`]: random flip schedules, the `+-1` sensing matrix, and two
//!   independent routes to the compressed measurements.
//! * [`recovery`]: DCT basis, orthogonal matching pursuit, error metrics.
//! * [`experiments`]: end-to-end reproductions and success-probability sweeps.

pub mod error;
pub mod experiments;
pub mod io;
pub mod recovery;
pub mod seed;
pub mod sensing;
pub mod signal;

pub use error::{Error, Result};
pub use seed::SeedStream;
