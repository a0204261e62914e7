//! Seeded Monte Carlo trial loops, Eb/N0 sweeps and BER statistics.
//!
//! Every per-frame random draw comes from a generator seeded with
//! `derive_seed(master, frame_index)`, so frames are independent work
//! items and a frame-parallel run produces bit-identical records to a
//! sequential one at any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{ebno_to_n0, transmit, uniform_cci_matrix};
use crate::fec::{BlockInterleaver, ConvCode};
use crate::modem::{build_frame, make_pilot_book, qpsk_hard_demap, qpsk_modulate, PilotMode};
use crate::receiver::{run_detector, DetectorConfig};
use crate::{derive_seed, Error, Result};

use num_complex::Complex64;
use std::f64::consts::TAU;

/// Carrier phase handling per Monte Carlo frame.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseMode {
    /// Redraw K phases uniformly on [0, 2 pi) each frame.
    Random,
    /// Fixed per-user phases for every frame.
    Fixed(Vec<f64>),
}

/// Full simulation scenario. The defaults reproduce the reference
/// multibeam setup: K=5 users, 100 info + 30 pilot symbols, uniform CCI
/// with zeta=0.25, unit amplitudes, random carrier phases, coded-preamble
/// pilots, the [171, 133] code and an 8-row block interleaver.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub k_users: usize,
    pub n_info: usize,
    pub n_pilot: usize,
    pub zeta: f64,
    pub amplitudes: Vec<f64>,
    pub phase_mode: PhaseMode,
    pub pilot_mode: PilotMode,
    pub code: ConvCode,
    pub interleaver_rows: usize,
    pub detector: DetectorConfig,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            k_users: 5,
            n_info: 100,
            n_pilot: 30,
            zeta: 0.25,
            amplitudes: vec![1.0; 5],
            phase_mode: PhaseMode::Random,
            pilot_mode: PilotMode::CodedPreamble,
            code: ConvCode::default(),
            interleaver_rows: 8,
            detector: DetectorConfig::default(),
            seed: 1,
        }
    }
}

impl Scenario {
    /// Information bits carried per user per frame (tail stripped).
    pub fn info_bits_per_frame(&self) -> usize {
        self.n_info - self.code.tail_bits()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_users == 0 {
            return Err(Error::Parameter("k_users must be positive".into()));
        }
        if self.n_info <= self.code.tail_bits() {
            return Err(Error::Parameter(format!(
                "n_info must exceed the {}-bit tail",
                self.code.tail_bits()
            )));
        }
        if self.amplitudes.len() != self.k_users {
            return Err(Error::Parameter(format!(
                "expected {} amplitudes, got {}",
                self.k_users,
                self.amplitudes.len()
            )));
        }
        if let PhaseMode::Fixed(p) = &self.phase_mode {
            if p.len() != self.k_users {
                return Err(Error::Parameter(format!(
                    "expected {} fixed phases, got {}",
                    self.k_users,
                    p.len()
                )));
            }
        }
        self.detector.snr_grid.validate()?;
        Ok(())
    }
}

/// Stopping rule for one measurement point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopRule {
    /// Stop once the final stage has accumulated this many bit errors.
    pub min_errors: u64,
    pub max_frames: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            min_errors: 100,
            max_frames: 10_000,
        }
    }
}

/// One measurement point of a BER curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub ebno_db: f64,
    /// Detection stage, 1-based.
    pub stage: usize,
    pub decoder: String,
    pub combining: bool,
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Set when the point stopped at `max_frames` without reaching
    /// `min_errors`.
    pub low_confidence: bool,
}

/// Per-stage bit errors of a single frame; the parallel map unit.
fn simulate_frame(
    scenario: &Scenario,
    pilots: &crate::modem::PilotBook,
    interleaver: &BlockInterleaver,
    n0: f64,
    frame_idx: u64,
) -> Result<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scenario.seed, frame_idx));
    let phases: Vec<f64> = match &scenario.phase_mode {
        PhaseMode::Random => (0..scenario.k_users).map(|_| rng.gen_range(0.0..TAU)).collect(),
        PhaseMode::Fixed(p) => p.clone(),
    };
    let msg_len = scenario.info_bits_per_frame();
    let info_bits: Vec<Vec<u8>> = (0..scenario.k_users)
        .map(|_| (0..msg_len).map(|_| rng.gen_range(0..2u8)).collect())
        .collect();
    let x: Vec<Vec<Complex64>> = info_bits
        .iter()
        .enumerate()
        .map(|(k, bits)| {
            build_frame(
                bits,
                &pilots.sequences[k],
                &pilots.bits[k],
                &scenario.code,
                interleaver,
            )
            .map(|f| f.symbols())
        })
        .collect::<Result<_>>()?;
    let h = uniform_cci_matrix(scenario.k_users, scenario.zeta, &scenario.amplitudes, &phases)?;
    let y = transmit(&h, &x, n0, &mut rng)?;
    let report = run_detector(&y, pilots, &scenario.detector, &scenario.code, interleaver)?;
    Ok(report
        .stages
        .iter()
        .map(|stage| {
            stage
                .decoded_bits
                .iter()
                .zip(&info_bits)
                .map(|(dec, truth)| {
                    dec.iter().zip(truth).filter(|(a, b)| a != b).count() as u64
                })
                .sum()
        })
        .collect())
}

/// Runs frames at one Eb/N0 point until the final stage reaches
/// `stop.min_errors` bit errors or `stop.max_frames` frames, whichever
/// comes first. `ebno_db = +inf` is the noiseless sentinel. Returns one
/// record per detection stage.
pub fn run_point(
    scenario: &Scenario,
    ebno_db: f64,
    stop: &StopRule,
    workers: usize,
) -> Result<Vec<BerRecord>> {
    if stop.min_errors == 0 || stop.max_frames == 0 {
        return Err(Error::Parameter("stop rule bounds must be positive".into()));
    }
    scenario.validate()?;
    let pilots = make_pilot_book(
        scenario.k_users,
        scenario.n_pilot,
        scenario.pilot_mode,
        &scenario.code,
        scenario.seed,
    )?;
    let interleaver = BlockInterleaver::for_len(scenario.interleaver_rows, 2 * scenario.n_info)?;
    let n0 = if ebno_db == f64::INFINITY {
        0.0
    } else {
        ebno_to_n0(ebno_db, 0.5)?
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;

    let stages = scenario.detector.stages;
    let mut errors = vec![0u64; stages];
    let mut frames = 0u64;
    let batch = 32u64;
    'outer: while frames < stop.max_frames {
        let lo = frames;
        let hi = (frames + batch).min(stop.max_frames);
        // Frames are computed in parallel but folded in index order, so
        // the stop point is independent of the worker count.
        let results: Vec<Result<Vec<u64>>> = pool.install(|| {
            (lo..hi)
                .into_par_iter()
                .map(|idx| simulate_frame(scenario, &pilots, &interleaver, n0, idx))
                .collect()
        });
        for res in results {
            let per_stage = res?;
            for (acc, e) in errors.iter_mut().zip(&per_stage) {
                *acc += e;
            }
            frames += 1;
            if errors[stages - 1] >= stop.min_errors {
                break 'outer;
            }
        }
    }

    let bits_per_frame = (scenario.k_users * scenario.info_bits_per_frame()) as u64;
    let bits = frames * bits_per_frame;
    Ok(errors
        .iter()
        .enumerate()
        .map(|(s, &bit_errors)| BerRecord {
            ebno_db,
            stage: s + 1,
            decoder: scenario.detector.decoder.to_string(),
            combining: scenario.detector.combining,
            frames,
            bits,
            bit_errors,
            ber: bit_errors as f64 / bits as f64,
            low_confidence: bit_errors < stop.min_errors,
        })
        .collect())
}

/// Runs `run_point` for every grid value; records ordered by (Eb/N0 grid
/// position, stage).
pub fn sweep(
    scenario: &Scenario,
    ebno_db_grid: &[f64],
    stop: &StopRule,
    workers: usize,
) -> Result<Vec<BerRecord>> {
    let mut out = Vec::with_capacity(ebno_db_grid.len() * scenario.detector.stages);
    for &ebno in ebno_db_grid {
        out.extend(run_point(scenario, ebno, stop, workers)?);
    }
    Ok(out)
}

/// Closed-form uncoded QPSK bit error rate, `Q(sqrt(2 * 10^(ebno/10)))`.
pub fn qpsk_theoretical_ber(ebno_db: f64) -> f64 {
    if ebno_db == f64::INFINITY {
        return 0.0;
    }
    if ebno_db == f64::NEG_INFINITY {
        return 0.5;
    }
    let x = (2.0 * 10f64.powf(ebno_db / 10.0)).sqrt();
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

const UNCODED_SYMBOLS_PER_FRAME: usize = 1000;

/// FEC bypass mode: a single interference-free user, hard QPSK decisions,
/// no code. Exists to pin the simulator's noise convention against the
/// closed-form Q-function oracle.
pub fn run_point_uncoded(
    ebno_db: f64,
    stop: &StopRule,
    seed: u64,
    workers: usize,
) -> Result<BerRecord> {
    if stop.min_errors == 0 || stop.max_frames == 0 {
        return Err(Error::Parameter("stop rule bounds must be positive".into()));
    }
    // Uncoded: Eb = Es / 2 = 1, so N0 = 10^(-ebno/10).
    let n0 = if ebno_db == f64::INFINITY {
        0.0
    } else {
        ebno_to_n0(ebno_db, 1.0)?
    };
    let channel = uniform_cci_matrix(1, 0.0, &[1.0], &[0.0])?;

    let frame_errors = |idx: u64| -> Result<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, idx));
        let bits: Vec<u8> = (0..2 * UNCODED_SYMBOLS_PER_FRAME)
            .map(|_| rng.gen_range(0..2u8))
            .collect();
        let x = vec![qpsk_modulate(&bits)?];
        let y = transmit(&channel, &x, n0, &mut rng)?;
        let mut errors = 0u64;
        for (j, &s) in y[0].iter().enumerate() {
            let (bi, bq) = qpsk_hard_demap(s, Complex64::new(1.0, 0.0));
            errors += (bi != bits[2 * j]) as u64 + (bq != bits[2 * j + 1]) as u64;
        }
        Ok(errors)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;

    let mut errors = 0u64;
    let mut frames = 0u64;
    let batch = 64u64;
    'outer: while frames < stop.max_frames {
        let lo = frames;
        let hi = (frames + batch).min(stop.max_frames);
        let results: Vec<Result<u64>> =
            pool.install(|| (lo..hi).into_par_iter().map(frame_errors).collect());
        for res in results {
            errors += res?;
            frames += 1;
            if errors >= stop.min_errors {
                break 'outer;
            }
        }
    }
    let bits = frames * 2 * UNCODED_SYMBOLS_PER_FRAME as u64;
    Ok(BerRecord {
        ebno_db,
        stage: 1,
        decoder: "uncoded".into(),
        combining: false,
        frames,
        bits,
        bit_errors: errors,
        ber: errors as f64 / bits as f64,
        low_confidence: errors < stop.min_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn theoretical_ber_points() {
        // 0.5*erfc(1) evaluated independently.
        assert_abs_diff_eq!(qpsk_theoretical_ber(0.0), 7.8650e-2, epsilon = 1e-5);
        assert_abs_diff_eq!(qpsk_theoretical_ber(4.0), 1.2501e-2, epsilon = 1e-5);
        assert_eq!(qpsk_theoretical_ber(f64::INFINITY), 0.0);
        assert_eq!(qpsk_theoretical_ber(f64::NEG_INFINITY), 0.5);
    }

    #[test]
    fn noiseless_point_is_error_free() {
        let scenario = Scenario::default();
        let stop = StopRule {
            min_errors: 1,
            max_frames: 2,
        };
        let records = run_point(&scenario, f64::INFINITY, &stop, 1).unwrap();
        assert_eq!(records.len(), 3);
        let last = records.last().unwrap();
        assert_eq!(last.bit_errors, 0);
        assert_eq!(last.frames, 2); // terminates at max_frames
        assert!(last.low_confidence);
        assert_eq!(last.bits, 2 * 5 * 94);
    }

    #[test]
    fn same_seed_is_bit_identical_across_worker_counts() {
        let scenario = Scenario::default();
        let stop = StopRule {
            min_errors: 20,
            max_frames: 40,
        };
        let a = run_point(&scenario, 2.0, &stop, 1).unwrap();
        let b = run_point(&scenario, 2.0, &stop, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let scenario = Scenario::default();
        let stop = StopRule {
            min_errors: 5,
            max_frames: 5,
        };
        assert!(sweep(&scenario, &[], &stop, 1).unwrap().is_empty());
        let recs = sweep(&scenario, &[4.0, 4.0], &stop, 2).unwrap();
        assert_eq!(recs.len(), 2 * scenario.detector.stages);
        // duplicate grid points with the same seed give identical pairs
        assert_eq!(recs[..3], recs[3..]);
    }

    #[test]
    fn error_accounting_is_exact() {
        // The record total must equal the sum of per-frame error counts.
        let scenario = Scenario::default();
        let stop = StopRule {
            min_errors: 1_000_000,
            max_frames: 8,
        };
        let records = run_point(&scenario, 2.0, &stop, 2).unwrap();
        let pilots = make_pilot_book(5, 30, PilotMode::CodedPreamble, &scenario.code, scenario.seed)
            .unwrap();
        let il = BlockInterleaver::for_len(8, 200).unwrap();
        let n0 = ebno_to_n0(2.0, 0.5).unwrap();
        let mut totals = vec![0u64; 3];
        for idx in 0..8 {
            let per_stage = simulate_frame(&scenario, &pilots, &il, n0, idx).unwrap();
            for (t, e) in totals.iter_mut().zip(&per_stage) {
                *t += e;
            }
        }
        for (rec, total) in records.iter().zip(&totals) {
            assert_eq!(rec.bit_errors, *total);
        }
    }

    #[test]
    fn uncoded_point_matches_q_function() {
        let stop = StopRule {
            min_errors: 500,
            max_frames: 10_000,
        };
        let rec = run_point_uncoded(4.0, &stop, 7, 4).unwrap();
        let theory = qpsk_theoretical_ber(4.0);
        assert!(
            (rec.ber - theory).abs() / theory < 0.10,
            "measured {} vs theory {theory}",
            rec.ber
        );
    }
}
