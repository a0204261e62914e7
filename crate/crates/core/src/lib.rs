//! Link-level simulator and receiver library for synchronous multibeam
//! satellite uplinks.
//!
//! The receive side implements an iterative multiuser detector built from
//! successive interference cancellation, decision-directed channel
//! estimation, cross-beam signal combining and convolutional channel
//! decoding (soft-decision Viterbi and exact log-MAP BCJR). The transmit
//! side and the [`montecarlo`] driver reproduce BER-vs-Eb/N0 behaviour of
//! that receiver over a K-beam co-channel interference channel
//! `y[i] = H x[i] + z[i]`.
//!
//! Module map:
//!
//! - [`modem`] — QPSK mapping/demapping, frame assembly, pilot books.
//! - [`fec`] — rate-1/2 convolutional code, Viterbi, log-MAP BCJR, block
//!   interleaver.
//! - [`channel`] — coupling matrix construction, the discrete transmit
//!   model, Eb/N0 bookkeeping.
//! - [`receiver`] — the multistage SIC detector.
//! - [`montecarlo`] — seeded trial loops, Eb/N0 sweeps, BER records.

pub mod channel;
pub mod fec;
pub mod modem;
pub mod montecarlo;
pub mod receiver;

use thiserror::Error;

/// Complex baseband scalar; the universal signal unit.
pub type ComplexSample = num_complex::Complex64;

/// Errors reported by the library surface.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Block/frame dimensions do not line up.
    #[error("framing error: {0}")]
    Framing(String),
    /// An argument is outside its allowed range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Pilot correlation sum has zero magnitude; no phase can be extracted.
    #[error("degenerate pilot: zero-magnitude correlation sum")]
    DegeneratePilot,
    /// Operation not available for the configured mode.
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// splitmix64 finalizer; mixes a master seed with a stream index so that
/// per-frame generators are independent and frame-parallel runs reproduce
/// sequential ones.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(stream.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
