//! QPSK-OFDM frames on a frequency-time grid with full-symbol pilots.
//!
//! The link is modelled per resource element: `Y = H X + N`, with the noise
//! variance set from the mean received signal power of the frame.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::csi::CsiMatrix;
use crate::error::{invalid, shape_err, Result};
use crate::rng::{rng_for, Stream};

/// Complex symbol grid, subcarriers by OFDM symbols.
pub type SymbolGrid = CsiMatrix;

/// Below this channel magnitude the zero-forcing division is skipped.
pub const EQUALIZER_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modulation {
    Qpsk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    pub n_subcarriers: usize,
    pub n_symbols: usize,
    pub carrier: f64,
    pub bandwidth: f64,
    pub modulation: Modulation,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 512,
            n_symbols: 16,
            carrier: 16_000.0,
            bandwidth: 4_000.0,
            modulation: Modulation::Qpsk,
        }
    }
}

impl OfdmConfig {
    /// A contiguous band of `n_subcarriers` around the default carrier that
    /// keeps the default subcarrier spacing and symbol duration.
    pub fn subband(n_subcarriers: usize) -> Self {
        let full = Self::default();
        Self {
            n_subcarriers,
            bandwidth: full.subcarrier_spacing() * n_subcarriers as f64,
            ..full
        }
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.n_subcarriers as f64
    }

    pub fn symbol_duration(&self) -> f64 {
        1.0 / self.subcarrier_spacing()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 || self.n_symbols == 0 {
            return Err(invalid("OFDM grid needs subcarriers and symbols"));
        }
        if !(self.bandwidth > 0.0) || !(self.carrier > self.bandwidth / 2.0) {
            return Err(invalid("carrier must exceed half the bandwidth, bandwidth positive"));
        }
        Ok(())
    }

    /// Absolute subcarrier frequencies in Hz, centred on the carrier.
    pub fn frequency_grid(&self) -> Vec<f64> {
        let df = self.subcarrier_spacing();
        let start = self.carrier - self.bandwidth / 2.0;
        (0..self.n_subcarriers).map(|s| start + s as f64 * df).collect()
    }

    /// Start time of each OFDM symbol in seconds.
    pub fn time_grid(&self) -> Vec<f64> {
        let t = self.symbol_duration();
        (0..self.n_symbols).map(|m| m as f64 * t).collect()
    }
}

/// Pilot OFDM symbols (whole columns of the grid) and their common value.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    indices: Vec<usize>,
    value: Complex64,
}

impl PilotPattern {
    /// QPSK point for bits `00`, used on every pilot cell.
    pub const DEFAULT_VALUE: Complex64 = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);

    pub fn new(indices: Vec<usize>, n_symbols: usize) -> Result<Self> {
        if indices.len() < 2 {
            return Err(invalid("need at least two pilot symbols"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("pilot indices must be strictly increasing"));
        }
        if indices.iter().any(|&i| i >= n_symbols) {
            return Err(invalid(format!("pilot index out of range for {n_symbols} symbols")));
        }
        Ok(Self {
            indices,
            value: Self::DEFAULT_VALUE,
        })
    }

    /// Symbols 4 and 12 of 16 (1-based).
    pub fn two_symbol() -> Self {
        Self::new(vec![3, 11], 16).expect("static pattern")
    }

    /// Symbols 3, 7, 11 and 15 of 16 (1-based).
    pub fn four_symbol() -> Self {
        Self::new(vec![2, 6, 10, 14], 16).expect("static pattern")
    }

    pub fn for_count(n_pilots: usize) -> Result<Self> {
        match n_pilots {
            2 => Ok(Self::two_symbol()),
            4 => Ok(Self::four_symbol()),
            n => Err(invalid(format!("unsupported pilot count {n}, expected 2 or 4"))),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn value(&self) -> Complex64 {
        self.value
    }

    pub fn is_pilot(&self, symbol: usize) -> bool {
        self.indices.binary_search(&symbol).is_ok()
    }

    /// Known pilot values, subcarriers by pilot symbols.
    pub fn values_grid(&self, n_subcarriers: usize) -> CsiMatrix {
        CsiMatrix::filled(n_subcarriers, self.indices.len(), self.value)
    }

    /// Data columns in increasing order.
    pub fn data_symbols(&self, n_symbols: usize) -> Vec<usize> {
        (0..n_symbols).filter(|&m| !self.is_pilot(m)).collect()
    }

    pub fn payload_len(&self, cfg: &OfdmConfig) -> usize {
        2 * cfg.n_subcarriers * (cfg.n_symbols - self.indices.len())
    }
}

/// Transmitted grid, optional received grid and the payload it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmFrameGrid {
    pub tx_symbols: SymbolGrid,
    pub rx_symbols: Option<SymbolGrid>,
    /// Row-major, true on pilot cells.
    pub pilot_mask: Vec<bool>,
    pub payload_bits: Vec<u8>,
    pub pattern: PilotPattern,
}

impl OfdmFrameGrid {
    pub fn shape(&self) -> (usize, usize) {
        self.tx_symbols.shape()
    }

    pub fn is_pilot(&self, s: usize, m: usize) -> bool {
        self.pilot_mask[s * self.tx_symbols.symbols() + m]
    }
}

#[inline]
fn qpsk_point(b0: u8, b1: u8) -> Complex64 {
    let i = if b1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let q = if b0 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(i, q)
}

/// Gray-mapped QPSK: `00 -> (+1+j)`, `01 -> (-1+j)`, `11 -> (-1-j)`,
/// `10 -> (+1-j)`, all divided by sqrt(2).
pub fn qpsk_modulate(bits: &[u8]) -> Result<Vec<Complex64>> {
    if bits.len() % 2 != 0 {
        return Err(invalid(format!("QPSK needs an even bit count, got {}", bits.len())));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(invalid("bits must be 0 or 1"));
    }
    Ok(bits.chunks_exact(2).map(|c| qpsk_point(c[0], c[1])).collect())
}

/// Quadrant decision; points on an axis go to the nonnegative side.
pub fn qpsk_demodulate(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(2 * symbols.len());
    for z in symbols {
        bits.push(u8::from(z.im < 0.0));
        bits.push(u8::from(z.re < 0.0));
    }
    bits
}

/// Fills pilot columns with the pattern value and data columns, column by
/// column, with the modulated payload.
pub fn build_frame(
    cfg: &OfdmConfig,
    pattern: &PilotPattern,
    payload_bits: &[u8],
) -> Result<OfdmFrameGrid> {
    cfg.validate()?;
    if pattern.indices().last().is_some_and(|&i| i >= cfg.n_symbols) {
        return Err(invalid("pilot pattern exceeds the frame length"));
    }
    let expected = pattern.payload_len(cfg);
    if payload_bits.len() != expected {
        return Err(shape_err(format!("{expected} payload bits"), payload_bits.len()));
    }
    let symbols = qpsk_modulate(payload_bits)?;
    let (ns, nm) = (cfg.n_subcarriers, cfg.n_symbols);
    let mut tx = SymbolGrid::zeros(ns, nm);
    let mut mask = vec![false; ns * nm];
    let mut next = symbols.into_iter();
    for m in 0..nm {
        let pilot = pattern.is_pilot(m);
        for s in 0..ns {
            if pilot {
                tx.set(s, m, pattern.value());
                mask[s * nm + m] = true;
            } else {
                tx.set(s, m, next.next().expect("length checked above"));
            }
        }
    }
    Ok(OfdmFrameGrid {
        tx_symbols: tx,
        rx_symbols: None,
        pilot_mask: mask,
        payload_bits: payload_bits.to_vec(),
        pattern: pattern.clone(),
    })
}

/// Unit-variance circular Gaussian noise grid drawn from `seed`.
pub fn unit_noise(n_subcarriers: usize, n_symbols: usize, seed: u64) -> SymbolGrid {
    let mut rng = rng_for(seed, Stream::Noise);
    SymbolGrid::from_fn(n_subcarriers, n_symbols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * FRAC_1_SQRT_2
    })
}

/// Noise standard deviation for a target SNR given the received signal power.
pub fn noise_sigma(signal_power: f64, snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        (signal_power / 10f64.powf(snr_db / 10.0)).sqrt()
    }
}

/// `Y = H X + N` with `N` scaled so that `mean|HX|^2 / sigma^2` is the SNR.
/// `snr_db = +inf` disables the noise.
pub fn apply_channel(
    frame: &OfdmFrameGrid,
    h: &CsiMatrix,
    snr_db: f64,
    seed: u64,
) -> Result<SymbolGrid> {
    let (ns, nm) = frame.shape();
    let noise = unit_noise(ns, nm, seed);
    apply_channel_with_noise(frame, h, snr_db, &noise)
}

/// Same as [`apply_channel`] with an explicit unit-variance noise grid.
pub fn apply_channel_with_noise(
    frame: &OfdmFrameGrid,
    h: &CsiMatrix,
    snr_db: f64,
    unit_noise: &SymbolGrid,
) -> Result<SymbolGrid> {
    frame.tx_symbols.check_same_shape(h)?;
    frame.tx_symbols.check_same_shape(unit_noise)?;
    if snr_db.is_nan() {
        return Err(invalid("SNR must not be NaN"));
    }
    let faded: Vec<Complex64> = h
        .as_slice()
        .iter()
        .zip(frame.tx_symbols.as_slice())
        .map(|(h, x)| h * x)
        .collect();
    let power = faded.iter().map(|v| v.norm_sqr()).sum::<f64>() / faded.len() as f64;
    let sigma = noise_sigma(power, snr_db);
    let (ns, nm) = h.shape();
    let values = faded
        .iter()
        .zip(unit_noise.as_slice())
        .map(|(y, n)| if sigma > 0.0 { y + n * sigma } else { *y })
        .collect();
    SymbolGrid::new(ns, nm, values)
}

/// Zero-forcing equalizer output.
#[derive(Debug, Clone, PartialEq)]
pub struct Equalized {
    pub symbols: SymbolGrid,
    /// Row-major; true where the estimate was too small to divide by.
    pub flagged: Vec<bool>,
}

impl Equalized {
    pub fn flagged_count(&self) -> usize {
        self.flagged.iter().filter(|&&f| f).count()
    }
}

/// `X = Y / H_est` per cell. Cells with `|H_est| < EQUALIZER_EPSILON` are
/// flagged and passed through as `Y`.
pub fn equalize(y: &SymbolGrid, h_est: &CsiMatrix) -> Result<Equalized> {
    y.check_same_shape(h_est)?;
    let mut flagged = vec![false; y.as_slice().len()];
    let values: Vec<Complex64> = y
        .as_slice()
        .iter()
        .zip(h_est.as_slice())
        .zip(flagged.iter_mut())
        .map(|((&y, &h), flag)| {
            if h.norm() < EQUALIZER_EPSILON {
                *flag = true;
                y
            } else {
                y / h
            }
        })
        .collect();
    let (ns, nm) = y.shape();
    Ok(Equalized {
        symbols: SymbolGrid::new(ns, nm, values)?,
        flagged,
    })
}

/// Demodulates the data cells of `x_hat` in payload order (column by column).
pub fn demodulate_payload(pattern: &PilotPattern, x_hat: &SymbolGrid) -> Vec<u8> {
    let (ns, nm) = x_hat.shape();
    let mut symbols = Vec::with_capacity(ns * nm);
    for m in pattern.data_symbols(nm) {
        for s in 0..ns {
            symbols.push(x_hat.get(s, m));
        }
    }
    qpsk_demodulate(&symbols)
}

pub fn count_bit_errors(sent: &[u8], received: &[u8]) -> Result<usize> {
    if sent.len() != received.len() {
        return Err(shape_err(sent.len(), received.len()));
    }
    Ok(sent.iter().zip(received).filter(|(a, b)| a != b).count())
}

/// Fraction of differing bits.
pub fn compute_ber(sent: &[u8], received: &[u8]) -> Result<f64> {
    if sent.is_empty() {
        return Err(crate::error::Error::Empty("bit strings"));
    }
    Ok(count_bit_errors(sent, received)? as f64 / sent.len() as f64)
}
