//! Rate-1/2 convolutional code: encoder, trellis, soft-decision Viterbi,
//! exact log-MAP BCJR, and a block interleaver.
//!
//! The default code is the constraint-length-7 feed-forward code with
//! generators `[0o171, 0o133]`, zero-tail terminated with 6 tail bits, so
//! a message of L bits produces 2·(L+6) coded bits and the encoder starts
//! and ends in the all-zero state.
//!
//! LLR sign convention everywhere: positive LLR means bit 0.

mod bcjr;
mod interleaver;
mod viterbi;

pub use bcjr::bcjr_decode;
pub use interleaver::BlockInterleaver;
pub use viterbi::viterbi_decode;

use crate::{Error, Result};

/// Rate-1/2 feed-forward convolutional code description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCode {
    /// Number of taps per generator, including the current input.
    pub constraint_length: u32,
    /// Generator polynomials; bit `constraint_length-1` multiplies the
    /// current input, bit 0 the oldest register bit.
    pub generators: [u32; 2],
}

impl Default for ConvCode {
    fn default() -> Self {
        ConvCode {
            constraint_length: 7,
            generators: [0o171, 0o133],
        }
    }
}

impl ConvCode {
    pub fn new(constraint_length: u32, generators: [u32; 2]) -> Result<Self> {
        if constraint_length < 2 || constraint_length > 16 {
            return Err(Error::Parameter(format!(
                "constraint length {constraint_length} out of range [2, 16]"
            )));
        }
        let top = 1u32 << (constraint_length - 1);
        for g in generators {
            if g >= 1 << constraint_length {
                return Err(Error::Parameter(format!(
                    "generator {g:o} does not fit in {constraint_length} bits"
                )));
            }
            if g & 1 == 0 || g & top == 0 {
                return Err(Error::Parameter(format!(
                    "generator {g:o} must have nonzero constant and leading terms"
                )));
            }
        }
        Ok(ConvCode {
            constraint_length,
            generators,
        })
    }

    /// Register length (number of memory bits) = constraint_length - 1.
    pub fn memory(&self) -> usize {
        (self.constraint_length - 1) as usize
    }

    /// Number of trellis states, 2^memory.
    pub fn num_states(&self) -> usize {
        1 << self.memory()
    }

    /// Tail bits appended for zero-tail termination.
    pub fn tail_bits(&self) -> usize {
        self.memory()
    }

    /// Coded length for a message of `msg_len` bits.
    pub fn coded_len(&self, msg_len: usize) -> usize {
        2 * (msg_len + self.tail_bits())
    }

    /// Message length recoverable from `coded_len` coded bits, if any.
    pub fn msg_len(&self, coded_len: usize) -> Result<usize> {
        if coded_len % 2 != 0 {
            return Err(Error::Parameter(format!(
                "coded length {coded_len} is not a multiple of 2"
            )));
        }
        let pairs = coded_len / 2;
        if pairs < self.tail_bits() {
            return Err(Error::Parameter(format!(
                "coded length {coded_len} shorter than the tail"
            )));
        }
        Ok(pairs - self.tail_bits())
    }
}

/// Unrolled state-transition table of a [`ConvCode`].
///
/// State bit `memory-1` holds the most recent input; a transition on input
/// `b` shifts `b` in from the top. Every state has exactly two outgoing and
/// two incoming edges.
#[derive(Debug, Clone)]
pub struct Trellis {
    pub num_states: usize,
    /// `[state][input] -> (next_state, output bit pair)`.
    pub next: Vec<[(usize, [u8; 2]); 2]>,
}

impl Trellis {
    pub fn new(code: &ConvCode) -> Self {
        let m = code.memory();
        let num_states = code.num_states();
        let mut next = Vec::with_capacity(num_states);
        for s in 0..num_states {
            let mut row = [(0usize, [0u8; 2]); 2];
            for (b, entry) in row.iter_mut().enumerate() {
                let window = (b << m) | s;
                let out = [
                    ((window as u32 & code.generators[0]).count_ones() & 1) as u8,
                    ((window as u32 & code.generators[1]).count_ones() & 1) as u8,
                ];
                *entry = (window >> 1, out);
            }
            next.push(row);
        }
        Trellis { num_states, next }
    }
}

/// Encodes `bits` with zero-tail termination.
///
/// Output length is `2*(bits.len() + tail)`; output pair `i` is
/// `(bits·g0, bits·g1) mod 2` over the sliding window.
pub fn conv_encode(bits: &[u8], code: &ConvCode) -> Vec<u8> {
    let m = code.memory();
    let mut out = Vec::with_capacity(code.coded_len(bits.len()));
    let mut state = 0usize;
    for &b in bits.iter().chain(std::iter::repeat(&0u8).take(m)) {
        let window = ((b as usize & 1) << m) | state;
        out.push(((window as u32 & code.generators[0]).count_ones() & 1) as u8);
        out.push(((window as u32 & code.generators[1]).count_ones() & 1) as u8);
        state = window >> 1;
    }
    debug_assert_eq!(state, 0, "zero-tail must terminate in state 0");
    out
}
