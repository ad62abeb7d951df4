//! Underwater acoustic OFDM channel estimation by channel super-resolution.

pub mod baselines;
pub mod channel;
pub mod cli;
mod codec;
pub mod csi;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod neuralnet;
pub mod ofdm;
pub mod rng;

pub use csi::{CsiMatrix, TwoChannelCsi};
pub use error::{Error, Result};
