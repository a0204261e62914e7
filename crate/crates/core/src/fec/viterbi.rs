//! Soft-decision Viterbi decoding over the zero-tail terminated trellis.

use super::{ConvCode, Trellis};
use crate::{Error, Result};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// Maximum-likelihood sequence estimate from channel LLRs.
///
/// `llrs` holds one value per coded bit (positive means bit 0); its length
/// must be `2*(L + tail)` for the message length L. The returned message
/// maximizes the path metric `sum llr_i * (1 - 2 c_i) / 2` over all
/// terminated codewords; tail bits are stripped. On equal path metrics the
/// earlier-evaluated branch survives (input 0 first, then lower state), so
/// decoding is deterministic on degenerate input.
pub fn viterbi_decode(llrs: &[f64], code: &ConvCode) -> Result<Vec<u8>> {
    let msg_len = code.msg_len(llrs.len())?;
    let tail = code.tail_bits();
    let trellis = Trellis::new(code);
    let n_states = trellis.num_states;

    let mut metric = vec![NEG_INF; n_states];
    metric[0] = 0.0;
    let mut new_metric = vec![NEG_INF; n_states];
    // Survivor (predecessor state, input bit) per section per state.
    let mut survivor: Vec<Vec<(u32, u8)>> = Vec::with_capacity(msg_len + tail);

    for t in 0..msg_len + tail {
        let inputs: &[usize] = if t < msg_len { &[0, 1] } else { &[0] };
        let (l0, l1) = (llrs[2 * t], llrs[2 * t + 1]);
        new_metric.fill(NEG_INF);
        let mut surv = vec![(0u32, 0u8); n_states];
        for s in 0..n_states {
            if metric[s] == NEG_INF {
                continue;
            }
            for &b in inputs {
                let (ns, out) = trellis.next[s][b];
                let bm = l0 * (1.0 - 2.0 * out[0] as f64) / 2.0
                    + l1 * (1.0 - 2.0 * out[1] as f64) / 2.0;
                let cand = metric[s] + bm;
                if cand > new_metric[ns] {
                    new_metric[ns] = cand;
                    surv[ns] = (s as u32, b as u8);
                }
            }
        }
        std::mem::swap(&mut metric, &mut new_metric);
        survivor.push(surv);
    }

    if metric[0] == NEG_INF {
        return Err(Error::Parameter("no terminated path survives".into()));
    }

    // Trace back from the zero state.
    let mut state = 0usize;
    let mut bits = vec![0u8; msg_len + tail];
    for t in (0..msg_len + tail).rev() {
        let (prev, b) = survivor[t][state];
        bits[t] = b;
        state = prev as usize;
    }
    bits.truncate(msg_len);
    Ok(bits)
}
