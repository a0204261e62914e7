//! QPSK mapping/demapping, pilot sequence books, and frame assembly.
//!
//! The constellation is the unnormalized Gray-mapped alphabet `{±1 ± j}`
//! (symbol energy exactly 2): bit pair `(b_I, b_Q)` maps to
//! `(1 - 2 b_I) + j (1 - 2 b_Q)`. Positive LLR means bit 0 throughout.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fec::{conv_encode, BlockInterleaver, ConvCode};
use crate::{derive_seed, ComplexSample, Error, Result};

/// Maps an even-length bit sequence onto QPSK symbols.
pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<ComplexSample>> {
    if bits.len() % 2 != 0 {
        return Err(Error::Framing(format!(
            "QPSK needs an even bit count, got {}",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|p| {
            Complex64::new(1.0 - 2.0 * p[0] as f64, 1.0 - 2.0 * p[1] as f64)
        })
        .collect())
}

/// Channel LLRs for one received sample given a complex gain reference and
/// the total complex noise variance: `llr = 4 * Re/Im(conj(gain) * y) / noise_var`.
pub fn qpsk_soft_demap(
    y: ComplexSample,
    gain: ComplexSample,
    noise_var: f64,
) -> Result<(f64, f64)> {
    if !(noise_var > 0.0) {
        return Err(Error::Parameter(format!(
            "noise variance must be positive, got {noise_var}"
        )));
    }
    let r = gain.conj() * y;
    Ok((4.0 * r.re / noise_var, 4.0 * r.im / noise_var))
}

/// Hard decisions per quadrant after derotation by `gain`; an exact zero
/// component decides bit 0.
pub fn qpsk_hard_demap(y: ComplexSample, gain: ComplexSample) -> (u8, u8) {
    let r = gain.conj() * y;
    ((r.re < 0.0) as u8, (r.im < 0.0) as u8)
}

/// How per-user pilot blocks are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PilotMode {
    /// Pilots are the encoded+modulated image of a deterministic per-user
    /// bit pattern; this is what makes the decode-and-compare SNR search
    /// meaningful. Default.
    CodedPreamble,
    /// Walsh-row pilots with exactly zero pairwise cross-correlation when
    /// the length condition holds; makes pilot-only channel estimation
    /// exact. Test mode.
    Orthogonal,
}

/// The K per-user training sequences.
#[derive(Debug, Clone)]
pub struct PilotBook {
    pub mode: PilotMode,
    /// `sequences[k]` is user k's pilot block of `n_pilot` symbols.
    pub sequences: Vec<Vec<ComplexSample>>,
    /// Generating bit patterns (coded-preamble mode only).
    pub bits: Vec<Vec<u8>>,
}

impl PilotBook {
    pub fn k_users(&self) -> usize {
        self.sequences.len()
    }

    pub fn n_pilot(&self) -> usize {
        self.sequences[0].len()
    }
}

fn walsh_row(row: usize, size: usize) -> Vec<f64> {
    (0..size)
        .map(|col| {
            if (row & col).count_ones() % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

/// Builds the K pilot sequences.
///
/// Coded-preamble sequences are deterministic in `(seed, user index)` and
/// are valid zero-tail codewords of `code` with `n_pilot - tail` message
/// bits. Orthogonal sequences are rows of the order-2^ceil(log2 K) Walsh
/// matrix tiled to `n_pilot` and scaled by `1+j`; pairwise
/// cross-correlations are exactly zero whenever `n_pilot` is a multiple of
/// the Walsh order.
pub fn make_pilot_book(
    k_users: usize,
    n_pilot: usize,
    mode: PilotMode,
    code: &ConvCode,
    seed: u64,
) -> Result<PilotBook> {
    if k_users == 0 {
        return Err(Error::Parameter("user count must be positive".into()));
    }
    if n_pilot == 0 {
        return Err(Error::Parameter("pilot length must be positive".into()));
    }
    match mode {
        PilotMode::Orthogonal => {
            let order = k_users.next_power_of_two();
            let sequences = (0..k_users)
                .map(|k| {
                    let row = walsh_row(k, order);
                    (0..n_pilot)
                        .map(|j| Complex64::new(1.0, 1.0) * row[j % order])
                        .collect()
                })
                .collect();
            Ok(PilotBook {
                mode,
                sequences,
                bits: vec![Vec::new(); k_users],
            })
        }
        PilotMode::CodedPreamble => {
            let tail = code.tail_bits();
            if n_pilot <= tail {
                return Err(Error::Parameter(format!(
                    "coded preamble needs n_pilot > {tail}, got {n_pilot}"
                )));
            }
            let msg_len = n_pilot - tail;
            let mut bits: Vec<Vec<u8>> = Vec::with_capacity(k_users);
            for k in 0..k_users {
                // Regenerate on the (unlikely) pattern collision so the
                // sequences stay mutually distinct.
                let mut salt = 0u64;
                let pattern = loop {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(seed, (k as u64) << 16 | salt));
                    let cand: Vec<u8> = (0..msg_len).map(|_| rng.gen_range(0..2u8)).collect();
                    if !bits.contains(&cand) {
                        break cand;
                    }
                    salt += 1;
                };
                bits.push(pattern);
            }
            let sequences = bits
                .iter()
                .map(|b| qpsk_modulate(&conv_encode(b, code)))
                .collect::<Result<Vec<_>>>()?;
            Ok(PilotBook {
                mode,
                sequences,
                bits,
            })
        }
    }
}

/// Per-user transmit unit: pilot block followed by the coded, interleaved
/// and modulated info block.
#[derive(Debug, Clone)]
pub struct Frame {
    pub pilot: Vec<ComplexSample>,
    pub info: Vec<ComplexSample>,
    pub pilot_bits: Vec<u8>,
    pub info_bits: Vec<u8>,
}

impl Frame {
    pub fn symbols(&self) -> Vec<ComplexSample> {
        self.pilot.iter().chain(&self.info).cloned().collect()
    }
}

/// Encodes, interleaves and modulates `info_bits`, prepending the pilot
/// block untouched by the interleaver.
pub fn build_frame(
    info_bits: &[u8],
    pilot_seq: &[ComplexSample],
    pilot_bits: &[u8],
    code: &ConvCode,
    interleaver: &BlockInterleaver,
) -> Result<Frame> {
    let coded = conv_encode(info_bits, code);
    let mixed = interleaver
        .interleave(&coded)
        .map_err(|e| Error::Framing(e.to_string()))?;
    let info = qpsk_modulate(&mixed)?;
    Ok(Frame {
        pilot: pilot_seq.to_vec(),
        info,
        pilot_bits: pilot_bits.to_vec(),
        info_bits: info_bits.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn gray_map_examples() {
        assert_eq!(qpsk_modulate(&[0, 0]).unwrap(), vec![Complex64::new(1.0, 1.0)]);
        assert_eq!(qpsk_modulate(&[1, 1]).unwrap(), vec![Complex64::new(-1.0, -1.0)]);
        assert_eq!(
            qpsk_modulate(&[0, 1, 1, 0]).unwrap(),
            vec![Complex64::new(1.0, -1.0), Complex64::new(-1.0, 1.0)]
        );
        assert!(qpsk_modulate(&[0, 1, 1]).is_err());
    }

    #[test]
    fn soft_demap_examples() {
        let one = Complex64::new(1.0, 0.0);
        let j = Complex64::new(0.0, 1.0);
        let (li, lq) = qpsk_soft_demap(Complex64::new(1.0, 1.0), one, 2.0).unwrap();
        assert_abs_diff_eq!(li, 2.0);
        assert_abs_diff_eq!(lq, 2.0);
        let (li, lq) = qpsk_soft_demap(Complex64::new(-1.0, -1.0), one, 2.0).unwrap();
        assert_abs_diff_eq!(li, -2.0);
        assert_abs_diff_eq!(lq, -2.0);
        // conj(j)*(1+j) = 1 - j
        let (li, lq) = qpsk_soft_demap(Complex64::new(1.0, 1.0), j, 2.0).unwrap();
        assert_abs_diff_eq!(li, 2.0);
        assert_abs_diff_eq!(lq, -2.0);
        assert!(qpsk_soft_demap(one, one, 0.0).is_err());
        assert!(qpsk_soft_demap(one, one, -1.0).is_err());
    }

    #[test]
    fn hard_demap_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(qpsk_hard_demap(Complex64::new(1.0, 1.0), one), (0, 0));
        assert_eq!(qpsk_hard_demap(Complex64::new(-0.1, 0.9), one), (1, 0));
        // exact zero resolves to bit 0
        assert_eq!(qpsk_hard_demap(Complex64::new(0.0, 0.0), one), (0, 0));
    }

    #[test]
    fn orthogonal_pilot_book_two_users() {
        let code = ConvCode::default();
        let book = make_pilot_book(2, 4, PilotMode::Orthogonal, &code, 0).unwrap();
        // rows of the 2x2 sign matrix repeated twice, scaled by (1+j)
        let scale = Complex64::new(1.0, 1.0);
        assert_eq!(book.sequences[0], vec![scale; 4]);
        assert_eq!(
            book.sequences[1],
            vec![scale, -scale, scale, -scale]
        );
        let cross: Complex64 = (0..4)
            .map(|j| book.sequences[0][j] * book.sequences[1][j].conj())
            .sum();
        assert_abs_diff_eq!(cross.norm(), 0.0);
    }

    #[test]
    fn orthogonal_pilot_book_gram_matrix() {
        // K=5, N_p=32: Gram matrix must be exactly 2*N_p*I.
        let code = ConvCode::default();
        let book = make_pilot_book(5, 32, PilotMode::Orthogonal, &code, 0).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let g: Complex64 = (0..32)
                    .map(|j| book.sequences[a][j] * book.sequences[b][j].conj())
                    .sum();
                let expect = if a == b { 64.0 } else { 0.0 };
                assert_abs_diff_eq!(g.re, expect);
                assert_abs_diff_eq!(g.im, 0.0);
            }
        }
    }

    #[test]
    fn coded_preamble_deterministic_and_distinct() {
        let code = ConvCode::default();
        let book = make_pilot_book(5, 30, PilotMode::CodedPreamble, &code, 42).unwrap();
        let again = make_pilot_book(5, 30, PilotMode::CodedPreamble, &code, 42).unwrap();
        for k in 0..5 {
            assert_eq!(book.sequences[k].len(), 30);
            assert_eq!(book.bits[k].len(), 24);
            assert_eq!(book.sequences[k], again.sequences[k]);
            // sequence is the modulated codeword of its bit pattern
            let regen = qpsk_modulate(&conv_encode(&book.bits[k], &code)).unwrap();
            assert_eq!(book.sequences[k], regen);
        }
        for a in 0..5 {
            for b in a + 1..5 {
                assert_ne!(book.sequences[a], book.sequences[b]);
            }
        }
    }

    #[test]
    fn pilot_book_rejects_bad_params() {
        let code = ConvCode::default();
        assert!(make_pilot_book(0, 8, PilotMode::Orthogonal, &code, 0).is_err());
        assert!(make_pilot_book(2, 0, PilotMode::Orthogonal, &code, 0).is_err());
        assert!(make_pilot_book(2, 6, PilotMode::CodedPreamble, &code, 0).is_err());
    }

    #[test]
    fn build_frame_lengths() {
        // N_i=100 at rate 1/2 with 6 tail bits needs 94 info bits.
        let code = ConvCode::default();
        let il = BlockInterleaver::for_len(8, 200).unwrap();
        let book = make_pilot_book(1, 30, PilotMode::CodedPreamble, &code, 1).unwrap();
        let bits = vec![0u8; 94];
        let frame = build_frame(&bits, &book.sequences[0], &book.bits[0], &code, &il).unwrap();
        assert_eq!(frame.info.len(), 100);
        assert_eq!(frame.pilot.len(), 30);
        assert_eq!(frame.pilot, book.sequences[0]);
        // all-zero payload modulates the all-zero codeword
        assert!(frame.info.iter().all(|s| *s == Complex64::new(1.0, 1.0)));
    }

    proptest! {
        #[test]
        fn modulate_demap_round_trip(bits in proptest::collection::vec(0u8..2, 2..100)) {
            let bits = if bits.len() % 2 == 0 { bits } else { bits[..bits.len()-1].to_vec() };
            let syms = qpsk_modulate(&bits).unwrap();
            // frame energy: every symbol has |s|^2 = 2 exactly
            for s in &syms {
                prop_assert_eq!(s.norm_sqr(), 2.0);
            }
            let mut out = Vec::new();
            for s in &syms {
                let (bi, bq) = qpsk_hard_demap(*s, Complex64::new(1.0, 0.0));
                out.push(bi);
                out.push(bq);
            }
            prop_assert_eq!(out, bits);
        }

        #[test]
        fn soft_hard_consistency(re in -5.0f64..5.0, im in -5.0f64..5.0) {
            prop_assume!(re != 0.0 && im != 0.0);
            let y = Complex64::new(re, im);
            let gain = Complex64::new(1.0, 0.0);
            let (li, lq) = qpsk_soft_demap(y, gain, 1.3).unwrap();
            let (bi, bq) = qpsk_hard_demap(y, gain);
            prop_assert_eq!(li < 0.0, bi == 1);
            prop_assert_eq!(lq < 0.0, bq == 1);
        }
    }
}
