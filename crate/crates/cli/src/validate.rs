//! The fast self-check suite behind `sicsim validate`: seeded versions of
//! the library's strongest invariants, small enough to run in seconds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sicsim_core::fec::{bcjr_decode, conv_encode, ConvCode};
use sicsim_core::montecarlo::{
    qpsk_theoretical_ber, run_point, run_point_uncoded, Scenario, StopRule,
};
use sicsim_core::receiver::Decoder;

/// Runs every check, printing one PASS/FAIL line each; true iff all pass.
pub fn run_all(workers: usize) -> bool {
    let checks: [(&str, fn(usize) -> Result<String, String>); 4] = [
        ("noiseless-roundtrip", check_noiseless_roundtrip),
        ("bcjr-exhaustive-map", check_bcjr_oracle),
        ("uncoded-qpsk-oracle", check_qpsk_oracle),
        ("combining-gain", check_combining_gain),
    ];
    let mut all_ok = true;
    for (name, check) in checks {
        match check(workers) {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                all_ok = false;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    all_ok
}

/// Reference-scenario frames without noise decode error-free at the final
/// stage with either decoder.
fn check_noiseless_roundtrip(workers: usize) -> Result<String, String> {
    let stop = StopRule {
        min_errors: 1,
        max_frames: 4,
    };
    for decoder in [Decoder::Viterbi, Decoder::Bcjr] {
        let mut scenario = Scenario::default();
        scenario.detector.decoder = decoder;
        let records = run_point(&scenario, f64::INFINITY, &stop, workers)
            .map_err(|e| e.to_string())?;
        let last = records.last().unwrap();
        if last.bit_errors != 0 {
            return Err(format!(
                "{decoder}: {} bit errors on noiseless frames",
                last.bit_errors
            ));
        }
    }
    Ok("0 bit errors over 4 noiseless frames, both decoders".into())
}

/// BCJR posterior LLRs against brute-force marginalization over every
/// codeword of a short block.
fn check_bcjr_oracle(_workers: usize) -> Result<String, String> {
    let code = ConvCode::default();
    let msg_len = 6usize;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let msg: Vec<u8> = (0..msg_len).map(|_| rng.gen_range(0..2)).collect();
        let coded = conv_encode(&msg, &code);
        let llrs: Vec<f64> = coded
            .iter()
            .map(|&c| {
                let x = 1.0 - 2.0 * c as f64;
                let noise: f64 = rng.sample(StandardNormal);
                2.0 * (x + 0.8 * noise) / 0.64
            })
            .collect();
        let (_, posteriors) = bcjr_decode(&llrs, &code).map_err(|e| e.to_string())?;
        let oracle = exhaustive_posteriors(&llrs, msg_len, &code);
        for (a, b) in posteriors.iter().zip(&oracle) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst < 1e-9 {
        Ok(format!("max |llr - oracle| = {worst:.2e} over 20 blocks"))
    } else {
        Err(format!("max |llr - oracle| = {worst:.2e} exceeds 1e-9"))
    }
}

/// Posterior message-bit LLRs by summing over all `2^msg_len` codewords.
fn exhaustive_posteriors(llrs: &[f64], msg_len: usize, code: &ConvCode) -> Vec<f64> {
    let mut log_num = vec![f64::NEG_INFINITY; msg_len]; // bit = 0
    let mut log_den = vec![f64::NEG_INFINITY; msg_len]; // bit = 1
    let log_add = |a: f64, b: f64| {
        if a == f64::NEG_INFINITY {
            b
        } else if b == f64::NEG_INFINITY {
            a
        } else {
            a.max(b) + (-(a - b).abs()).exp().ln_1p()
        }
    };
    for m in 0u32..1 << msg_len {
        let msg: Vec<u8> = (0..msg_len).map(|i| ((m >> i) & 1) as u8).collect();
        let coded = conv_encode(&msg, code);
        let metric: f64 = coded
            .iter()
            .zip(llrs)
            .map(|(&c, &l)| l * (1.0 - 2.0 * c as f64) / 2.0)
            .sum();
        for i in 0..msg_len {
            if msg[i] == 0 {
                log_num[i] = log_add(log_num[i], metric);
            } else {
                log_den[i] = log_add(log_den[i], metric);
            }
        }
    }
    log_num.iter().zip(&log_den).map(|(n, d)| n - d).collect()
}

/// Measured uncoded QPSK BER at 4 dB against the Q-function.
fn check_qpsk_oracle(workers: usize) -> Result<String, String> {
    let stop = StopRule {
        min_errors: 500,
        max_frames: 100_000,
    };
    let record = run_point_uncoded(4.0, &stop, 11, workers).map_err(|e| e.to_string())?;
    let theory = qpsk_theoretical_ber(4.0);
    let rel = (record.ber - theory).abs() / theory;
    if rel <= 0.10 {
        Ok(format!(
            "ber {:.5e} vs theory {theory:.5e} ({:.1}% off)",
            record.ber,
            rel * 100.0
        ))
    } else {
        Err(format!(
            "ber {:.5e} vs theory {theory:.5e} ({:.1}% off, allowed 10%)",
            record.ber,
            rel * 100.0
        ))
    }
}

/// Cross-beam combining must strictly reduce final-stage errors on a
/// paired seeded run; a build that ignores the flag produces identical
/// counts and fails this check.
fn check_combining_gain(workers: usize) -> Result<String, String> {
    let stop = StopRule {
        min_errors: u64::MAX,
        max_frames: 150,
    };
    let mut errors = [0u64; 2];
    for (i, combining) in [true, false].into_iter().enumerate() {
        let mut scenario = Scenario::default();
        scenario.detector.combining = combining;
        let records = run_point(&scenario, 2.0, &stop, workers).map_err(|e| e.to_string())?;
        errors[i] = records.last().unwrap().bit_errors;
    }
    let [on, off] = errors;
    if on < off {
        Ok(format!("final-stage errors {on} (on) < {off} (off) over 150 frames at 2 dB"))
    } else {
        Err(format!("final-stage errors {on} (on) vs {off} (off): no combining gain"))
    }
}
