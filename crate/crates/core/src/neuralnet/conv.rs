//! 3x3 same-padded convolution on `channels x rows x cols` feature maps.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::csi::TwoChannelCsi;
use crate::error::{invalid, shape_err, Result};

use super::gemm::gemm;

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Dense real tensor, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || rows == 0 || cols == 0 {
            return Err(invalid("feature map dimensions must be positive"));
        }
        if data.len() != channels * rows * cols {
            return Err(shape_err(channels * rows * cols, data.len()));
        }
        Ok(Self {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self {
            channels,
            rows,
            cols,
            data: vec![0.0; channels * rows * cols],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    #[inline]
    pub fn get(&self, c: usize, r: usize, k: usize) -> f64 {
        self.data[(c * self.rows + r) * self.cols + k]
    }
}

impl From<&TwoChannelCsi> for FeatureMap {
    fn from(t: &TwoChannelCsi) -> Self {
        let (rows, cols) = t.shape();
        Self {
            channels: TwoChannelCsi::CHANNELS,
            rows,
            cols,
            data: t.as_slice().to_vec(),
        }
    }
}

impl TryFrom<FeatureMap> for TwoChannelCsi {
    type Error = crate::error::Error;

    fn try_from(f: FeatureMap) -> Result<Self> {
        if f.channels != TwoChannelCsi::CHANNELS {
            return Err(shape_err("2 channels", f.channels));
        }
        TwoChannelCsi::new(f.rows, f.cols, f.data)
    }
}

/// One convolution layer with `out x in x 3 x 3` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub frozen: bool,
}

impl ConvLayer {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; out_channels * in_channels * TAPS],
            biases: vec![0.0; out_channels],
            frozen: false,
        }
    }

    /// Gaussian weights with variance `2 / ((1 + slope^2) fan_in)`, zero biases.
    pub fn he_normal(in_channels: usize, out_channels: usize, slope: f64, rng: &mut impl Rng) -> Self {
        let fan_in = (in_channels * TAPS) as f64;
        let std = (2.0 / ((1.0 + slope * slope) * fan_in)).sqrt();
        let mut layer = Self::zeros(in_channels, out_channels);
        for w in &mut layer.weights {
            *w = std * rng.sample::<f64, _>(StandardNormal);
        }
        layer
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * KERNEL + ky) * KERNEL + kx]
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(invalid("layer channel counts must be positive"));
        }
        if self.weights.len() != self.out_channels * self.in_channels * TAPS {
            return Err(shape_err(self.out_channels * self.in_channels * TAPS, self.weights.len()));
        }
        if self.biases.len() != self.out_channels {
            return Err(shape_err(self.out_channels, self.biases.len()));
        }
        if self.weights.iter().chain(&self.biases).any(|v| !v.is_finite()) {
            return Err(invalid("layer parameters must be finite"));
        }
        Ok(())
    }

    /// Pre-activation output `W * cols + b` for an already unfolded input.
    pub(crate) fn forward_cols(&self, cols: &[f64], pixels: usize, out: &mut [f64]) {
        for (o, chunk) in out.chunks_exact_mut(pixels).enumerate() {
            chunk.fill(self.biases[o]);
        }
        gemm(
            self.out_channels,
            self.in_channels * TAPS,
            pixels,
            1.0,
            &self.weights,
            false,
            cols,
            false,
            1.0,
            out,
        );
    }
}

/// Unfolds 3x3 zero-padded neighbourhoods: row `(c, ky, kx)`, column `pixel`.
pub(crate) fn im2col(input: &[f64], channels: usize, rows: usize, cols: usize, out: &mut [f64]) {
    let pixels = rows * cols;
    debug_assert_eq!(out.len(), channels * TAPS * pixels);
    for c in 0..channels {
        let plane = &input[c * pixels..(c + 1) * pixels];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let dst = &mut out[((c * KERNEL + ky) * KERNEL + kx) * pixels..][..pixels];
                for r in 0..rows {
                    let row = &mut dst[r * cols..(r + 1) * cols];
                    let sr = r + ky;
                    if sr < 1 || sr > rows {
                        row.fill(0.0);
                        continue;
                    }
                    let src = &plane[(sr - 1) * cols..sr * cols];
                    match kx {
                        0 => {
                            row[0] = 0.0;
                            row[1..].copy_from_slice(&src[..cols - 1]);
                        }
                        1 => row.copy_from_slice(src),
                        _ => {
                            row[..cols - 1].copy_from_slice(&src[1..]);
                            row[cols - 1] = 0.0;
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates unfolded gradients back onto the map.
pub(crate) fn col2im(grad_cols: &[f64], channels: usize, rows: usize, cols: usize, out: &mut [f64]) {
    let pixels = rows * cols;
    out.fill(0.0);
    for c in 0..channels {
        let plane = &mut out[c * pixels..(c + 1) * pixels];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let src = &grad_cols[((c * KERNEL + ky) * KERNEL + kx) * pixels..][..pixels];
                for r in 0..rows {
                    let sr = r + ky;
                    if sr < 1 || sr > rows {
                        continue;
                    }
                    let row = &src[r * cols..(r + 1) * cols];
                    let dst = &mut plane[(sr - 1) * cols..sr * cols];
                    match kx {
                        0 => dst[..cols - 1]
                            .iter_mut()
                            .zip(&row[1..])
                            .for_each(|(d, s)| *d += s),
                        1 => dst.iter_mut().zip(row).for_each(|(d, s)| *d += s),
                        _ => dst[1..]
                            .iter_mut()
                            .zip(&row[..cols - 1])
                            .for_each(|(d, s)| *d += s),
                    }
                }
            }
        }
    }
}

/// Zero-padded 3x3 cross-correlation plus bias; spatial size is preserved.
pub fn conv2d_forward(input: &FeatureMap, layer: &ConvLayer) -> Result<FeatureMap> {
    if input.channels != layer.in_channels {
        return Err(shape_err(
            format!("{} input channels", layer.in_channels),
            input.channels,
        ));
    }
    let pixels = input.rows * input.cols;
    let mut cols = vec![0.0; layer.in_channels * TAPS * pixels];
    im2col(&input.data, input.channels, input.rows, input.cols, &mut cols);
    let mut out = vec![0.0; layer.out_channels * pixels];
    layer.forward_cols(&cols, pixels, &mut out);
    FeatureMap::new(layer.out_channels, input.rows, input.cols, out)
}
