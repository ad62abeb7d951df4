//! Comparison estimators: plain LS with time interpolation, and a fully
//! connected network mapping one subcarrier's pilot estimates to its whole row.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::codec::{Reader, Writer};
use crate::csi::CsiMatrix;
use crate::error::{invalid, shape_err, Result};
use crate::estimation::{pilot_ls_estimates, raw_csi, ScalingFactor};
use crate::neuralnet::gemm::gemm;
use crate::neuralnet::{lrelu, lrelu_grad, mse_grad, mse_loss, Trainable};
use crate::ofdm::{PilotPattern, SymbolGrid};
use crate::rng::{rng_for, Stream};

pub const HIDDEN_SIZES: [usize; 3] = [64, 128, 64];
pub const MLP_MAGIC: &[u8; 4] = b"MLPB";
const MLP_VERSION: u32 = 1;

/// LS on the pilot columns and time interpolation, no learning.
pub fn ls_baseline(rx: &SymbolGrid, pattern: &PilotPattern) -> Result<CsiMatrix> {
    raw_csi(rx, pattern)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn parameter_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Fully connected network with leaky ReLU on every hidden layer and a
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
    lrelu_slope: f64,
}

impl MlpNetwork {
    /// Layer widths `2P, 64, 128, 64, 2M` for `P` pilots and `M` symbols.
    pub fn sizes_for(n_pilots: usize, n_symbols: usize) -> Vec<usize> {
        let mut sizes = vec![2 * n_pilots];
        sizes.extend_from_slice(&HIDDEN_SIZES);
        sizes.push(2 * n_symbols);
        sizes
    }

    pub fn new(sizes: &[usize], lrelu_slope: f64, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, lrelu_slope)?;
        let mut rng = rng_for(seed, Stream::Init);
        for l in &mut net.layers {
            let std = (2.0 / ((1.0 + lrelu_slope * lrelu_slope) * l.inputs as f64)).sqrt();
            for w in &mut l.weights {
                *w = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], lrelu_slope: f64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid("need at least two positive layer sizes"));
        }
        Self::from_layers(sizes.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect(), lrelu_slope)
    }

    pub fn from_layers(layers: Vec<DenseLayer>, lrelu_slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        if !(lrelu_slope > 0.0 && lrelu_slope < 1.0) {
            return Err(invalid("leaky slope must lie in (0, 1)"));
        }
        for l in &layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(shape_err(l.inputs * l.outputs + l.outputs, l.parameter_count()));
            }
        }
        if layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return Err(invalid("adjacent layer sizes do not chain"));
        }
        Ok(Self { layers, lrelu_slope })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn lrelu_slope(&self) -> f64 {
        self.lrelu_slope
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Returns every layer input followed by the output.
    fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = l.biases.clone();
            gemm(l.outputs, l.inputs, 1, 1.0, &l.weights, false, &acts[i], false, 1.0, &mut y);
            if i + 1 < self.layers.len() {
                y.iter_mut().for_each(|v| *v = lrelu(*v, self.lrelu_slope));
            }
            acts.push(y);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_len() {
            return Err(shape_err(self.input_len(), x.len()));
        }
        Ok(self.trace(x).pop().unwrap())
    }

    /// MSE against `target` and its gradient, flattened like [`Self::parameters`].
    pub fn loss_and_gradient(&self, x: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.input_len() {
            return Err(shape_err(self.input_len(), x.len()));
        }
        let acts = self.trace(x);
        let out = &acts[acts.len() - 1];
        let loss = mse_loss(out, target)?;
        let mut delta = mse_grad(out, target)?;
        let mut blocks: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        for (i, l) in self.layers.iter().enumerate().rev() {
            let mut g = vec![0.0; l.parameter_count()];
            let (gw, gb) = g.split_at_mut(l.weights.len());
            gemm(l.outputs, 1, l.inputs, 1.0, &delta, false, &acts[i], false, 0.0, gw);
            gb.copy_from_slice(&delta);
            blocks[i] = g;
            if i > 0 {
                let mut up = vec![0.0; l.inputs];
                gemm(l.inputs, l.outputs, 1, 1.0, &l.weights, true, &delta, false, 0.0, &mut up);
                for (d, a) in up.iter_mut().zip(&acts[i]) {
                    *d *= lrelu_grad(*a, self.lrelu_slope);
                }
                delta = up;
            }
        }
        Ok((loss, blocks.concat()))
    }

    /// Per layer, weights then biases.
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
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset + nw..offset + nw + nb]);
            offset += nw + nb;
        }
    }
}

/// Per-subcarrier `(features, target)` training sample.
pub type MlpSample = (Vec<f64>, Vec<f64>);

impl Trainable for MlpNetwork {
    type Sample = MlpSample;

    fn parameters(&self) -> Vec<f64> {
        MlpNetwork::parameters(self)
    }

    fn set_parameters(&mut self, params: &[f64]) {
        MlpNetwork::set_parameters(self, params)
    }

    fn trainable_mask(&self) -> Vec<bool> {
        vec![true; self.parameter_count()]
    }

    fn sample_loss(&self, (x, t): &MlpSample) -> Result<f64> {
        mse_loss(&self.forward(x)?, t)
    }

    fn sample_gradient(&self, (x, t): &MlpSample) -> Result<(f64, Vec<f64>)> {
        self.loss_and_gradient(x, t)
    }
}

/// Real parts then imaginary parts of one row, multiplied by `factor`.
fn split_row(row: &[Complex64], factor: f64) -> Vec<f64> {
    row.iter().map(|z| z.re * factor).chain(row.iter().map(|z| z.im * factor)).collect()
}

fn join_row(v: &[f64], factor: f64) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[n + i]) / factor).collect()
}

/// One feature vector per subcarrier from the scaled pilot LS estimates.
pub fn mlp_features(rx: &SymbolGrid, pattern: &PilotPattern, factor: ScalingFactor) -> Result<Vec<Vec<f64>>> {
    let est = pilot_ls_estimates(rx, pattern)?;
    Ok((0..est.subcarriers()).map(|s| split_row(est.row(s), factor.value())).collect())
}

/// One target vector per subcarrier from the scaled true CSI.
pub fn mlp_targets(h: &CsiMatrix, factor: ScalingFactor) -> Vec<Vec<f64>> {
    (0..h.subcarriers()).map(|s| split_row(h.row(s), factor.value())).collect()
}

/// Full CSI estimate by running the network on every subcarrier.
pub fn mlp_estimate(
    net: &MlpNetwork,
    rx: &SymbolGrid,
    pattern: &PilotPattern,
    factor: ScalingFactor,
) -> Result<CsiMatrix> {
    if net.output_len() != 2 * rx.symbols() {
        return Err(shape_err(2 * rx.symbols(), net.output_len()));
    }
    let mut values = Vec::with_capacity(rx.subcarriers() * rx.symbols());
    for x in mlp_features(rx, pattern, factor)? {
        values.extend(join_row(&net.forward(&x)?, factor.value()));
    }
    CsiMatrix::new(rx.subcarriers(), rx.symbols(), values)
}

/// Binary container for [`MlpNetwork`]: magic `MLPB`, version, layer count,
/// slope and scaling factor as f32, the layer sizes, then per layer the
/// weights and biases as little-endian f32 blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCheckpoint {
    pub network: MlpNetwork,
    pub scaling: ScalingFactor,
}

impl MlpCheckpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MLP_MAGIC);
        w.u32(MLP_VERSION);
        w.len_u32(self.network.layers.len());
        w.f32(self.network.lrelu_slope as f32);
        w.f32(self.scaling.value() as f32);
        for s in self.network.sizes() {
            w.len_u32(s);
        }
        for l in &self.network.layers {
            w.f32_block(&l.weights);
            w.f32_block(&l.biases);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "MLP checkpoint");
        r.expect_magic(MLP_MAGIC)?;
        let version = r.u32()?;
        if version != MLP_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let n_layers = r.usize()?;
        let slope = r.f32()? as f64;
        let scaling = ScalingFactor::new(r.f32()? as f64)?;
        let sizes = (0..=n_layers).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::with_capacity(n_layers);
        for w in sizes.windows(2) {
            layers.push(DenseLayer {
                inputs: w[0],
                outputs: w[1],
                weights: r.f32_block(w[0] * w[1])?,
                biases: r.f32_block(w[1])?,
            });
        }
        r.finish()?;
        Ok(Self {
            network: MlpNetwork::from_layers(layers, slope)?,
            scaling,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn manifest(&self) -> String {
        let mut s = String::new();
        writeln!(s, "format = MLPB v{MLP_VERSION}").unwrap();
        let sizes: Vec<String> = self.network.sizes().iter().map(ToString::to_string).collect();
        writeln!(s, "sizes = {}", sizes.join(",")).unwrap();
        writeln!(s, "lrelu_slope = {}", self.network.lrelu_slope as f32).unwrap();
        writeln!(s, "scaling_factor = {}", self.scaling.value() as f32).unwrap();
        writeln!(s, "parameters = {}", self.network.parameter_count()).unwrap();
        s
    }
}
