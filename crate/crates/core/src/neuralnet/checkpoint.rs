//! Binary checkpoint for the residual network.
//!
//! Layout, all little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `CSRN` | 4 bytes |
//! | version | u32 |
//! | depth, width, channels | u32 each |
//! | LReLU slope, scaling factor | f32 each |
//! | per layer: out, in, kernel rows, kernel cols | u32 each |
//! | per layer: frozen flag | u8 |
//! | per layer: weights then biases, row-major | f32 blocks |

use std::fmt::Write as _;
use std::path::Path;

use crate::codec::{Reader, Writer};
use crate::error::Result;
use crate::estimation::ScalingFactor;

use super::conv::{ConvLayer, KERNEL};
use super::network::ConvNetwork;

pub const MAGIC: &[u8; 4] = b"CSRN";
pub const VERSION: u32 = 1;

/// A network plus the scaling factor its inputs were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: ConvNetwork,
    pub scaling: ScalingFactor,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let net = &self.network;
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u32(VERSION);
        w.len_u32(net.depth());
        w.len_u32(net.width());
        w.len_u32(net.channels());
        w.f32(net.lrelu_slope() as f32);
        w.f32(self.scaling.value() as f32);
        for l in net.layers() {
            w.len_u32(l.out_channels);
            w.len_u32(l.in_channels);
            w.len_u32(KERNEL);
            w.len_u32(KERNEL);
            w.u8(l.frozen as u8);
            w.f32_block(&l.weights);
            w.f32_block(&l.biases);
        }
        w.finish()
    }

    /// Parameters come back rounded to `f32`.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        r.expect_magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let depth = r.usize()?;
        let _width = r.usize()?;
        let _channels = r.usize()?;
        let slope = r.f32()? as f64;
        let scaling = ScalingFactor::new(r.f32()? as f64)?;
        let mut layers = Vec::with_capacity(depth.min(1024));
        for _ in 0..depth {
            let out_channels = r.usize()?;
            let in_channels = r.usize()?;
            if r.usize()? != KERNEL || r.usize()? != KERNEL {
                return Err(r.fail("only 3x3 kernels are supported"));
            }
            let frozen = r.bool()?;
            let weights = r.f32_block(out_channels * in_channels * KERNEL * KERNEL)?;
            let biases = r.f32_block(out_channels)?;
            layers.push(ConvLayer {
                in_channels,
                out_channels,
                weights,
                biases,
                frozen,
            });
        }
        r.finish()?;
        Ok(Self {
            network: ConvNetwork::from_layers(layers, slope)?,
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

    /// Human-readable summary of the header and layer table.
    pub fn manifest(&self) -> String {
        let net = &self.network;
        let mut s = String::new();
        writeln!(s, "format = CSRN v{VERSION}").unwrap();
        writeln!(s, "depth = {}", net.depth()).unwrap();
        writeln!(s, "width = {}", net.width()).unwrap();
        writeln!(s, "channels = {}", net.channels()).unwrap();
        writeln!(s, "lrelu_slope = {}", net.lrelu_slope() as f32).unwrap();
        writeln!(s, "scaling_factor = {}", self.scaling.value() as f32).unwrap();
        writeln!(s, "parameters = {}", net.parameter_count()).unwrap();
        writeln!(s, "frozen_layers = {}", net.frozen_count()).unwrap();
        for (i, l) in net.layers().iter().enumerate() {
            let norm = l.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            writeln!(
                s,
                "layer.{i} = {}x{}x{KERNEL}x{KERNEL} frozen={} weight_norm={norm:.6e}",
                l.out_channels, l.in_channels, l.frozen
            )
            .unwrap();
        }
        s
    }
}
