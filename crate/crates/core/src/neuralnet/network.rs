//! The residual convolutional stack.

use crate::csi::TwoChannelCsi;
use crate::error::{invalid, shape_err, Result};
use crate::rng::{rng_for, Stream};

use super::activation::{lrelu, lrelu_grad};
use super::conv::{col2im, im2col, ConvLayer, FeatureMap, KERNEL};
use super::gemm::gemm;
use super::loss::{mse_grad, mse_loss};

const TAPS: usize = KERNEL * KERNEL;

/// Depth, width and input channel count of a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkShape {
    pub depth: usize,
    pub width: usize,
    pub channels: usize,
    pub lrelu_slope: f64,
}

impl NetworkShape {
    /// Twenty layers of 64 filters on two-channel input.
    pub const FULL: Self = Self {
        depth: 20,
        width: 64,
        channels: 2,
        lrelu_slope: 0.3,
    };

    /// Eight layers of 16 filters, small enough for CPU experiments.
    pub const DESK: Self = Self {
        depth: 8,
        width: 16,
        channels: 2,
        lrelu_slope: 0.3,
    };

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(invalid("network needs at least an input and an output layer"));
        }
        if self.width == 0 || self.channels == 0 {
            return Err(invalid("width and channel count must be positive"));
        }
        if !(self.lrelu_slope > 0.0 && self.lrelu_slope < 1.0) {
            return Err(invalid("leaky slope must lie in (0, 1)"));
        }
        Ok(())
    }

    fn layer_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.depth).map(move |l| {
            let cin = if l == 0 { self.channels } else { self.width };
            let cout = if l + 1 == self.depth { self.channels } else { self.width };
            (cin, cout)
        })
    }
}

/// Parameter gradients, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Convolution stack `R` with output `input + R(input)`.
///
/// Every layer but the last is followed by a leaky ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetwork {
    layers: Vec<ConvLayer>,
    lrelu_slope: f64,
}

impl ConvNetwork {
    /// He-initialized network; weights depend only on `shape` and `seed`.
    pub fn new(shape: NetworkShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = rng_for(seed, Stream::Init);
        let layers = shape
            .layer_dims()
            .map(|(cin, cout)| ConvLayer::he_normal(cin, cout, shape.lrelu_slope, &mut rng))
            .collect();
        Ok(Self {
            layers,
            lrelu_slope: shape.lrelu_slope,
        })
    }

    /// All parameters zero: the network is the identity map.
    pub fn zeros(shape: NetworkShape) -> Result<Self> {
        shape.validate()?;
        Ok(Self {
            layers: shape.layer_dims().map(|(cin, cout)| ConvLayer::zeros(cin, cout)).collect(),
            lrelu_slope: shape.lrelu_slope,
        })
    }

    pub fn from_layers(layers: Vec<ConvLayer>, lrelu_slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        if !(lrelu_slope > 0.0 && lrelu_slope < 1.0) {
            return Err(invalid("leaky slope must lie in (0, 1)"));
        }
        for l in &layers {
            l.validate()?;
        }
        if layers.windows(2).any(|w| w[0].out_channels != w[1].in_channels) {
            return Err(invalid("adjacent layer channel counts do not chain"));
        }
        if layers[0].in_channels != layers[layers.len() - 1].out_channels {
            return Err(invalid("residual output must have as many channels as the input"));
        }
        Ok(Self {
            layers,
            lrelu_slope,
        })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn width(&self) -> usize {
        self.layers[0].out_channels
    }

    pub fn channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn lrelu_slope(&self) -> f64 {
        self.lrelu_slope
    }

    pub fn shape(&self) -> NetworkShape {
        NetworkShape {
            depth: self.depth(),
            width: self.width(),
            channels: self.channels(),
            lrelu_slope: self.lrelu_slope,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::parameter_count).sum()
    }

    pub fn frozen_count(&self) -> usize {
        self.layers.iter().filter(|l| l.frozen).count()
    }

    /// Marks the first `n` layers frozen and the rest trainable.
    pub fn freeze_layers(&mut self, n: usize) -> Result<()> {
        if n > self.depth() {
            return Err(invalid(format!("cannot freeze {n} of {} layers", self.depth())));
        }
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.frozen = i < n;
        }
        Ok(())
    }

    fn check_input(&self, input: &FeatureMap) -> Result<()> {
        if input.channels() != self.channels() {
            return Err(shape_err(format!("{} channels", self.channels()), input.channels()));
        }
        Ok(())
    }

    /// Runs the stack and returns the input of every layer plus the final
    /// pre-activation. Layer inputs after the first are LReLU outputs, whose
    /// sign matches the pre-activation they came from.
    fn forward_trace(&self, input: &FeatureMap) -> (Vec<Vec<f64>>, Vec<f64>) {
        let pixels = input.rows() * input.cols();
        let mut acts = Vec::with_capacity(self.depth());
        let mut current = input.as_slice().to_vec();
        let mut cols = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            cols.resize(layer.in_channels * TAPS * pixels, 0.0);
            im2col(&current, layer.in_channels, input.rows(), input.cols(), &mut cols);
            let mut out = vec![0.0; layer.out_channels * pixels];
            layer.forward_cols(&cols, pixels, &mut out);
            if l + 1 < self.depth() {
                out.iter_mut().for_each(|v| *v = lrelu(*v, self.lrelu_slope));
            }
            acts.push(std::mem::replace(&mut current, out));
        }
        (acts, current)
    }

    pub fn forward_map(&self, input: &FeatureMap) -> Result<FeatureMap> {
        self.check_input(input)?;
        let (_, residual) = self.forward_trace(input);
        let out = input.as_slice().iter().zip(&residual).map(|(x, r)| x + r).collect();
        FeatureMap::new(input.channels(), input.rows(), input.cols(), out)
    }

    /// Prediction `input + R(input)`.
    pub fn forward(&self, input: &TwoChannelCsi) -> Result<TwoChannelCsi> {
        TwoChannelCsi::try_from(self.forward_map(&FeatureMap::from(input))?)
    }

    /// MSE between prediction and target with gradients for every layer.
    /// Frozen layers get zero gradients but still pass gradients upstream.
    pub fn loss_and_gradients(
        &self,
        input: &FeatureMap,
        target: &FeatureMap,
    ) -> Result<(f64, Vec<LayerGradient>)> {
        self.check_input(input)?;
        if input.as_slice().len() != target.as_slice().len()
            || (input.rows(), input.cols()) != (target.rows(), target.cols())
        {
            return Err(shape_err(
                format!("{}x{}x{}", input.channels(), input.rows(), input.cols()),
                format!("{}x{}x{}", target.channels(), target.rows(), target.cols()),
            ));
        }
        let (rows, cols_n) = (input.rows(), input.cols());
        let pixels = rows * cols_n;
        let (acts, residual) = self.forward_trace(input);
        let pred: Vec<f64> = input.as_slice().iter().zip(&residual).map(|(x, r)| x + r).collect();
        let loss = mse_loss(&pred, target.as_slice())?;

        let mut grads: Vec<LayerGradient> = self
            .layers
            .iter()
            .map(|l| LayerGradient {
                weights: vec![0.0; l.weights.len()],
                biases: vec![0.0; l.biases.len()],
            })
            .collect();
        let Some(lowest_trainable) = self.layers.iter().position(|l| !l.frozen) else {
            return Ok((loss, grads));
        };

        // Gradient with respect to the current layer's pre-activation.
        let mut delta = mse_grad(&pred, target.as_slice())?;
        let mut cols = Vec::new();
        for l in (lowest_trainable..self.depth()).rev() {
            let layer = &self.layers[l];
            let k = layer.in_channels * TAPS;
            cols.resize(k * pixels, 0.0);
            im2col(&acts[l], layer.in_channels, rows, cols_n, &mut cols);
            if !layer.frozen {
                let g = &mut grads[l];
                gemm(layer.out_channels, pixels, k, 1.0, &delta, false, &cols, true, 0.0, &mut g.weights);
                for (o, b) in g.biases.iter_mut().enumerate() {
                    *b = delta[o * pixels..(o + 1) * pixels].iter().sum();
                }
            }
            if l == lowest_trainable {
                break;
            }
            let mut grad_cols = vec![0.0; k * pixels];
            gemm(k, layer.out_channels, pixels, 1.0, &layer.weights, true, &delta, false, 0.0, &mut grad_cols);
            let mut upstream = vec![0.0; layer.in_channels * pixels];
            col2im(&grad_cols, layer.in_channels, rows, cols_n, &mut upstream);
            for (d, a) in upstream.iter_mut().zip(&acts[l]) {
                *d *= lrelu_grad(*a, self.lrelu_slope);
            }
            delta = upstream;
        }
        Ok((loss, grads))
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_parameters(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.parameter_count());
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
    }

    pub fn trainable_mask(&self) -> Vec<bool> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::repeat_n(!l.frozen, l.parameter_count()))
            .collect()
    }
}

pub(crate) fn flatten_gradients(grads: &[LayerGradient]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in grads {
        out.extend_from_slice(&g.weights);
        out.extend_from_slice(&g.biases);
    }
    out
}
