//! Training entry points that draw their samples from a [`Dataset`].

use crate::baselines::{MlpCheckpoint, MlpNetwork};
use crate::error::Result;
use crate::estimation::ScalingFactor;
use crate::neuralnet::{fit, transfer_train, Checkpoint, ConvNetwork, LossReport, NetworkShape, TrainingConfig};

use super::dataset::{Dataset, Split};

/// Residual network trained on one SNR tag, or on every tag when `snr_db`
/// is `None`. Initialization and shuffling both derive from `cfg.seed`.
pub fn train_csrnet(
    ds: &Dataset,
    n_pilots: usize,
    snr_db: Option<f64>,
    shape: NetworkShape,
    cfg: &TrainingConfig,
    factor: ScalingFactor,
) -> Result<(Checkpoint, LossReport)> {
    let train = ds.training_pairs(Split::Train, snr_db, n_pilots, factor)?;
    let val = ds.training_pairs(Split::Validation, snr_db, n_pilots, factor)?;
    let mut network = ConvNetwork::new(shape, cfg.seed)?;
    let report = fit(&mut network, &train, &val, cfg)?;
    Ok((Checkpoint { network, scaling: factor }, report))
}

/// Fine-tunes `pretrained` on every SNR tag with its first `frozen` layers
/// fixed; `None` freezes half the depth.
pub fn transfer_csrnet(
    ds: &Dataset,
    pretrained: &Checkpoint,
    n_pilots: usize,
    frozen: Option<usize>,
    cfg: &TrainingConfig,
) -> Result<(Checkpoint, LossReport)> {
    let factor = pretrained.scaling;
    let train = ds.training_pairs(Split::Train, None, n_pilots, factor)?;
    let val = ds.training_pairs(Split::Validation, None, n_pilots, factor)?;
    let n_frozen = frozen.unwrap_or(pretrained.network.depth() / 2);
    let (network, report) = transfer_train(&pretrained.network, n_frozen, &train, &val, cfg)?;
    Ok((Checkpoint { network, scaling: factor }, report))
}

/// Fully connected baseline on per-subcarrier samples.
pub fn train_mlp(
    ds: &Dataset,
    n_pilots: usize,
    snr_db: Option<f64>,
    cfg: &TrainingConfig,
    factor: ScalingFactor,
) -> Result<(MlpCheckpoint, LossReport)> {
    let train = ds.mlp_samples(Split::Train, snr_db, n_pilots, factor)?;
    let val = ds.mlp_samples(Split::Validation, snr_db, n_pilots, factor)?;
    let sizes = MlpNetwork::sizes_for(n_pilots, ds.spec.ofdm.n_symbols);
    let mut network = MlpNetwork::new(&sizes, 0.3, cfg.seed)?;
    let report = fit(&mut network, &train, &val, cfg)?;
    Ok((MlpCheckpoint { network, scaling: factor }, report))
}
