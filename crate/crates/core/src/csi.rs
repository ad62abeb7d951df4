//! Frequency-time channel grids.
//!
//! A [`CsiMatrix`] holds the complex response `H[s, m]` for subcarrier `s` and
//! OFDM symbol `m`, stored row-major by subcarrier. A [`TwoChannelCsi`] is the
//! same grid split into a real plane and an imaginary plane, which is the
//! layout the convolutional network consumes.

use num_complex::Complex64;

use crate::error::{invalid, shape_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    subcarriers: usize,
    symbols: usize,
    values: Vec<Complex64>,
}

impl CsiMatrix {
    /// Wraps row-major values; rejects empty dimensions and non-finite entries.
    pub fn new(subcarriers: usize, symbols: usize, values: Vec<Complex64>) -> Result<Self> {
        if subcarriers == 0 || symbols == 0 {
            return Err(invalid("CSI grid needs at least one subcarrier and one symbol"));
        }
        if values.len() != subcarriers * symbols {
            return Err(shape_err(subcarriers * symbols, values.len()));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid("CSI entries must be finite"));
        }
        Ok(Self {
            subcarriers,
            symbols,
            values,
        })
    }

    pub fn from_fn(
        subcarriers: usize,
        symbols: usize,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        assert!(subcarriers > 0 && symbols > 0, "empty CSI grid");
        let mut values = Vec::with_capacity(subcarriers * symbols);
        for s in 0..subcarriers {
            for m in 0..symbols {
                values.push(f(s, m));
            }
        }
        Self {
            subcarriers,
            symbols,
            values,
        }
    }

    pub fn filled(subcarriers: usize, symbols: usize, value: Complex64) -> Self {
        Self::from_fn(subcarriers, symbols, |_, _| value)
    }

    pub fn zeros(subcarriers: usize, symbols: usize) -> Self {
        Self::filled(subcarriers, symbols, Complex64::new(0.0, 0.0))
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.subcarriers, self.symbols)
    }

    #[inline]
    pub fn get(&self, s: usize, m: usize) -> Complex64 {
        self.values[s * self.symbols + m]
    }

    #[inline]
    pub fn set(&mut self, s: usize, m: usize, v: Complex64) {
        self.values[s * self.symbols + m] = v;
    }

    pub fn row(&self, s: usize) -> &[Complex64] {
        &self.values[s * self.symbols..(s + 1) * self.symbols]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [Complex64] {
        &mut self.values[s * self.symbols..(s + 1) * self.symbols]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.values
    }

    /// Squared Frobenius norm, `sum |H[s,m]|^2`.
    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            subcarriers: self.subcarriers,
            symbols: self.symbols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn check_same_shape(&self, other: &CsiMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        Ok(())
    }
}

/// Real tensor of shape `2 x S x M`: plane 0 real parts, plane 1 imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoChannelCsi {
    subcarriers: usize,
    symbols: usize,
    data: Vec<f64>,
}

impl TwoChannelCsi {
    pub const CHANNELS: usize = 2;

    pub fn new(subcarriers: usize, symbols: usize, data: Vec<f64>) -> Result<Self> {
        if subcarriers == 0 || symbols == 0 {
            return Err(invalid("tensor needs at least one subcarrier and one symbol"));
        }
        if data.len() != Self::CHANNELS * subcarriers * symbols {
            return Err(shape_err(
                Self::CHANNELS * subcarriers * symbols,
                data.len(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tensor entries must be finite"));
        }
        Ok(Self {
            subcarriers,
            symbols,
            data,
        })
    }

    pub fn zeros(subcarriers: usize, symbols: usize) -> Self {
        Self {
            subcarriers,
            symbols,
            data: vec![0.0; Self::CHANNELS * subcarriers * symbols],
        }
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.subcarriers, self.symbols)
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.subcarriers * self.symbols;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let n = self.subcarriers * self.symbols;
        &mut self.data[channel * n..(channel + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            subcarriers: self.subcarriers,
            symbols: self.symbols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}
