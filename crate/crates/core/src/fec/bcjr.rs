//! Exact log-MAP BCJR decoding (forward/backward recursion in the log
//! domain, log-sum-exp with the log1p correction term).

use super::{ConvCode, Trellis};
use crate::{Error, Result};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Jacobian logarithm: ln(e^a + e^b) without overflow.
fn max_star(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

/// Bitwise a-posteriori decoding of a zero-tail terminated codeword.
///
/// `llrs` are channel LLRs per coded bit, already scaled for the channel
/// noise variance (see the modem soft demap). Returns hard decisions and
/// the posterior LLR of every message bit; with uniform priors these are
/// exactly `ln P(b=0|y) - ln P(b=1|y)`. A tie (posterior exactly 0)
/// decides bit 0.
pub fn bcjr_decode(llrs: &[f64], code: &ConvCode) -> Result<(Vec<u8>, Vec<f64>)> {
    if let Some(bad) = llrs.iter().find(|l| !l.is_finite()) {
        return Err(Error::Parameter(format!("non-finite input LLR {bad}")));
    }
    let msg_len = code.msg_len(llrs.len())?;
    let tail = code.tail_bits();
    let sections = msg_len + tail;
    let trellis = Trellis::new(code);
    let n_states = trellis.num_states;

    // Branch metrics gamma[t][s][b]; tail sections force input 0.
    let gamma = |t: usize, s: usize, b: usize| -> f64 {
        let (_, out) = trellis.next[s][b];
        llrs[2 * t] * (1.0 - 2.0 * out[0] as f64) / 2.0
            + llrs[2 * t + 1] * (1.0 - 2.0 * out[1] as f64) / 2.0
    };

    // Forward recursion, normalized per section to keep values bounded;
    // the normalization constants cancel in the posterior difference.
    let mut alpha = vec![vec![NEG_INF; n_states]; sections + 1];
    alpha[0][0] = 0.0;
    for t in 0..sections {
        let n_inputs = if t < msg_len { 2 } else { 1 };
        for s in 0..n_states {
            if alpha[t][s] == NEG_INF {
                continue;
            }
            for b in 0..n_inputs {
                let (ns, _) = trellis.next[s][b];
                let v = max_star(alpha[t + 1][ns], alpha[t][s] + gamma(t, s, b));
                alpha[t + 1][ns] = v;
            }
        }
        let m = alpha[t + 1].iter().cloned().fold(NEG_INF, f64::max);
        for v in alpha[t + 1].iter_mut() {
            *v -= m;
        }
    }

    let mut beta = vec![vec![NEG_INF; n_states]; sections + 1];
    beta[sections][0] = 0.0;
    for t in (0..sections).rev() {
        let n_inputs = if t < msg_len { 2 } else { 1 };
        for s in 0..n_states {
            for b in 0..n_inputs {
                let (ns, _) = trellis.next[s][b];
                if beta[t + 1][ns] == NEG_INF {
                    continue;
                }
                let v = max_star(beta[t][s], beta[t + 1][ns] + gamma(t, s, b));
                beta[t][s] = v;
            }
        }
        let m = beta[t].iter().cloned().fold(NEG_INF, f64::max);
        for v in beta[t].iter_mut() {
            *v -= m;
        }
    }

    let mut posteriors = Vec::with_capacity(msg_len);
    let mut bits = Vec::with_capacity(msg_len);
    for t in 0..msg_len {
        let mut num = NEG_INF; // input bit 0
        let mut den = NEG_INF; // input bit 1
        for s in 0..n_states {
            if alpha[t][s] == NEG_INF {
                continue;
            }
            for b in 0..2 {
                let (ns, _) = trellis.next[s][b];
                let metric = alpha[t][s] + gamma(t, s, b) + beta[t + 1][ns];
                if b == 0 {
                    num = max_star(num, metric);
                } else {
                    den = max_star(den, metric);
                }
            }
        }
        let llr = num - den;
        debug_assert!(llr.is_finite());
        posteriors.push(llr);
        bits.push(if llr < 0.0 { 1 } else { 0 });
    }
    Ok((bits, posteriors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fec::{conv_encode, viterbi_decode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive MAP oracle: sums exp(path metric) over all 2^L messages.
    /// Independent of the forward/backward path.
    pub(crate) fn exhaustive_map(llrs: &[f64], code: &ConvCode, msg_len: usize) -> Vec<f64> {
        let mut metrics: Vec<(u32, f64)> = Vec::with_capacity(1 << msg_len);
        for m in 0u32..1 << msg_len {
            let bits: Vec<u8> = (0..msg_len).map(|i| ((m >> i) & 1) as u8).collect();
            let metric: f64 = conv_encode(&bits, code)
                .iter()
                .zip(llrs)
                .map(|(&c, &l)| l * (1.0 - 2.0 * c as f64) / 2.0)
                .sum();
            metrics.push((m, metric));
        }
        (0..msg_len)
            .map(|i| {
                let lse = |keep: u32| {
                    metrics
                        .iter()
                        .filter(|(m, _)| (m >> i) & 1 == keep)
                        .map(|&(_, v)| v)
                        .fold(NEG_INF, max_star)
                };
                lse(0) - lse(1)
            })
            .collect()
    }

    #[test]
    fn saturated_input_recovers_message() {
        let code = ConvCode::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let msg: Vec<u8> = (0..30).map(|_| rng.gen_range(0..2u8)).collect();
        let llrs: Vec<f64> = conv_encode(&msg, &code)
            .iter()
            .map(|&c| 100.0 * (1.0 - 2.0 * c as f64))
            .collect();
        let (bits, post) = bcjr_decode(&llrs, &code).unwrap();
        assert_eq!(bits, msg);
        assert!(post.iter().all(|l| l.abs() > 50.0));
    }

    #[test]
    fn all_zero_llrs_give_zero_posteriors() {
        let code = ConvCode::default();
        let (bits, post) = bcjr_decode(&vec![0.0; 2 * (12 + 6)], &code).unwrap();
        assert!(post.iter().all(|&l| l.abs() < 1e-12));
        assert_eq!(bits, vec![0; 12]); // tie decides bit 0
    }

    #[test]
    fn matches_exhaustive_map_oracle() {
        let code = ConvCode::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let msg_len = rng.gen_range(1..=8usize);
            let llrs: Vec<f64> = (0..2 * (msg_len + 6))
                .map(|_| rng.gen_range(-4.0..4.0))
                .collect();
            let (_, post) = bcjr_decode(&llrs, &code).unwrap();
            let oracle = exhaustive_map(&llrs, &code, msg_len);
            for (a, b) in post.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "posterior {a} vs oracle {b}");
            }
        }
    }

    #[test]
    fn agrees_with_viterbi_at_high_llr() {
        let code = ConvCode::default();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..10 {
            let msg: Vec<u8> = (0..25).map(|_| rng.gen_range(0..2u8)).collect();
            let llrs: Vec<f64> = conv_encode(&msg, &code)
                .iter()
                .map(|&c| 60.0 * (1.0 - 2.0 * c as f64))
                .collect();
            let (bits, _) = bcjr_decode(&llrs, &code).unwrap();
            assert_eq!(bits, viterbi_decode(&llrs, &code).unwrap());
        }
    }

    #[test]
    fn rejects_non_finite_input() {
        let code = ConvCode::default();
        let mut llrs = vec![0.5; 2 * (4 + 6)];
        llrs[3] = f64::NAN;
        assert!(bcjr_decode(&llrs, &code).is_err());
    }
}
