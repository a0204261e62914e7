//! The K-beam coupling channel: matrix construction, the discrete
//! transmit model `y[i] = H x[i] + z[i]`, and Eb/N0 bookkeeping.
//!
//! Noise convention: `transmit` draws circularly symmetric complex
//! Gaussian noise with total variance N0 per beam (N0/2 per real
//! dimension), so with the `{±1±j}` alphabet the uncoded QPSK BER closed
//! form is `Q(sqrt(2 Eb/N0))`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::{ComplexSample, Error, Result};

/// K x K complex coupling matrix; entry `h[k][i]` is the coupling of user
/// i's signal into beam k.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    pub h: Vec<Vec<ComplexSample>>,
    /// Beamforming matrix V retained by the geometry path so noise enters
    /// as `z = V n` (correlated across beams). Absent on the uniform-CCI
    /// path: noise is then white per beam.
    pub noise_mixer: Option<Vec<Vec<ComplexSample>>>,
}

impl ChannelMatrix {
    pub fn k_users(&self) -> usize {
        self.h.len()
    }
}

/// Array geometry inputs: steering matrix D (L x K), beamformer V (K x L)
/// and per-user complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub steering: Vec<Vec<ComplexSample>>,
    pub beamformer: Vec<Vec<ComplexSample>>,
    pub amplitudes: Vec<ComplexSample>,
}

/// Coupling matrix with interference spread uniformly between the
/// co-frequency signals: `h[k][i] = (1 if k==i else zeta) * a_i * e^{j phi_i}`.
///
/// Column i carries user i's complex amplitude; the magnitude profile is
/// the uniform-CCI matrix with diagonal `a_k` and off-diagonal `zeta a_i`.
pub fn uniform_cci_matrix(
    k_users: usize,
    zeta: f64,
    amplitudes: &[f64],
    phases: &[f64],
) -> Result<ChannelMatrix> {
    if k_users == 0 {
        return Err(Error::Parameter("user count must be positive".into()));
    }
    if !(0.0..1.0).contains(&zeta) {
        return Err(Error::Parameter(format!(
            "zeta must lie in [0, 1), got {zeta} (SIC ordering assumes diagonal dominance)"
        )));
    }
    if amplitudes.len() != k_users || phases.len() != k_users {
        return Err(Error::Parameter(
            "amplitudes and phases must have one entry per user".into(),
        ));
    }
    if amplitudes.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Parameter("amplitudes must be positive".into()));
    }
    let h = (0..k_users)
        .map(|k| {
            (0..k_users)
                .map(|i| {
                    let w = if k == i { 1.0 } else { zeta };
                    Complex64::from_polar(w * amplitudes[i], phases[i])
                })
                .collect()
        })
        .collect();
    Ok(ChannelMatrix {
        h,
        noise_mixer: None,
    })
}

/// Coupling matrix from array geometry: `H = V D diag(A)`, with V kept as
/// the noise mixer.
pub fn geometry_channel(g: &Geometry) -> Result<ChannelMatrix> {
    let k_users = g.beamformer.len();
    if k_users == 0 {
        return Err(Error::Parameter("beamformer must have at least one row".into()));
    }
    let l_sensors = g.beamformer[0].len();
    if g.beamformer.iter().any(|row| row.len() != l_sensors) {
        return Err(Error::Parameter("beamformer rows must have equal length".into()));
    }
    if g.steering.len() != l_sensors {
        return Err(Error::Parameter(format!(
            "steering matrix has {} rows, expected {l_sensors}",
            g.steering.len()
        )));
    }
    if g.steering.iter().any(|row| row.len() != k_users) {
        return Err(Error::Parameter(format!(
            "steering matrix columns must equal the user count {k_users}"
        )));
    }
    if g.amplitudes.len() != k_users {
        return Err(Error::Parameter("one complex amplitude per user required".into()));
    }
    let h = (0..k_users)
        .map(|k| {
            (0..k_users)
                .map(|i| {
                    let w: Complex64 = (0..l_sensors)
                        .map(|l| g.beamformer[k][l] * g.steering[l][i])
                        .sum();
                    w * g.amplitudes[i]
                })
                .collect()
        })
        .collect();
    Ok(ChannelMatrix {
        h,
        noise_mixer: Some(g.beamformer.clone()),
    })
}

/// Applies the discrete model per symbol index: `y[i] = H x[i] + z[i]`.
///
/// `x` is K x N (one row per user). Noise is i.i.d. across symbols with
/// total complex variance `n0` per beam, or `V n` with per-sensor variance
/// `n0` when the matrix carries a noise mixer. Deterministic given the rng.
pub fn transmit<R: Rng + ?Sized>(
    channel: &ChannelMatrix,
    x: &[Vec<ComplexSample>],
    n0: f64,
    rng: &mut R,
) -> Result<Vec<Vec<ComplexSample>>> {
    let k_users = channel.k_users();
    if x.len() != k_users {
        return Err(Error::Parameter(format!(
            "symbol matrix has {} rows, expected {k_users}",
            x.len()
        )));
    }
    if n0 < 0.0 || !n0.is_finite() {
        return Err(Error::Parameter(format!("noise power must be >= 0, got {n0}")));
    }
    let n_symbols = x.first().map_or(0, Vec::len);
    if x.iter().any(|row| row.len() != n_symbols) {
        return Err(Error::Parameter("symbol rows must have equal length".into()));
    }

    let mut y = vec![vec![Complex64::new(0.0, 0.0); n_symbols]; k_users];
    for k in 0..k_users {
        for j in 0..n_symbols {
            y[k][j] = (0..k_users).map(|i| channel.h[k][i] * x[i][j]).sum();
        }
    }
    if n0 > 0.0 {
        let sigma = (n0 / 2.0).sqrt();
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        match &channel.noise_mixer {
            None => {
                // Draw in (symbol, beam) order so the stream is fixed.
                for j in 0..n_symbols {
                    for row in y.iter_mut() {
                        row[j] += Complex64::new(normal.sample(rng), normal.sample(rng));
                    }
                }
            }
            Some(v) => {
                let l_sensors = v[0].len();
                let mut n = vec![Complex64::new(0.0, 0.0); l_sensors];
                for j in 0..n_symbols {
                    for s in n.iter_mut() {
                        *s = Complex64::new(normal.sample(rng), normal.sample(rng));
                    }
                    for (k, row) in y.iter_mut().enumerate() {
                        row[j] += (0..l_sensors).map(|l| v[k][l] * n[l]).sum::<Complex64>();
                    }
                }
            }
        }
    }
    Ok(y)
}

/// Noise power for an Eb/N0 operating point with QPSK (2 bits/symbol) at
/// symbol energy 2: `Eb = 2 / (2 * code_rate)`, `N0 = Eb / 10^(ebno/10)`.
pub fn ebno_to_n0(ebno_db: f64, code_rate: f64) -> Result<f64> {
    if !(code_rate > 0.0 && code_rate <= 1.0) {
        return Err(Error::Parameter(format!(
            "code rate must lie in (0, 1], got {code_rate}"
        )));
    }
    const BITS_PER_SYMBOL: f64 = 2.0;
    const SYMBOL_ENERGY: f64 = 2.0;
    let eb = SYMBOL_ENERGY / (BITS_PER_SYMBOL * code_rate);
    Ok(eb / 10f64.powf(ebno_db / 10.0))
}
