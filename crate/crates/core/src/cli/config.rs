//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; omitted keys keep their defaults. Lists are comma separated.

use std::fmt::Debug;
use std::str::FromStr;

use crate::estimation::ScalingFactor;
use crate::experiments::{DatasetSpec, ExperimentConfig, Method};
use crate::neuralnet::{LossWeighting, NetworkShape, Optimizer, TrainingConfig};
use crate::ofdm::OfdmConfig;

use super::CliError;

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "seed",
    "threads",
    "n_frames",
    "split_train",
    "split_val",
    "split_test",
    "snr_grid",
    "n_subcarriers",
    "n_symbols",
    "carrier",
    "bandwidth",
    "water_depth",
    "tx_depth",
    "rx_depth",
    "range",
    "spreading_factor",
    "c_water",
    "c_bottom",
    "bottom_density_ratio",
    "n_intrapaths",
    "tx_drift",
    "rx_drift",
    "tx_vehicular_sigma",
    "rx_vehicular",
    "n_macro_paths",
    "intrapath_delay_mean",
    "intrapath_gain_decay",
    "reference_frequency",
    "doppler_compensation",
    "method",
    "pilots",
    "snr_db",
    "pretrain_snr_db",
    "frozen_layers",
    "depth",
    "width",
    "lrelu_slope",
    "scaling_factor",
    "initial_lr",
    "lr_decay",
    "decay_every",
    "max_epochs",
    "patience",
    "batch_size",
    "optimizer",
    "momentum",
    "clip_norm",
    "loss_weighting",
    "configs",
    "eval_snr_grid",
];

/// Fully resolved settings for every subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub dataset: DatasetSpec,
    pub threads: usize,
    pub method: Method,
    pub pilots: usize,
    pub snr_db: Option<f64>,
    pub pretrain_snr_db: f64,
    pub frozen_layers: Option<usize>,
    pub shape: NetworkShape,
    pub scaling: ScalingFactor,
    pub training: TrainingConfig,
    pub configs: Vec<ExperimentConfig>,
    pub eval_snr_grid: Option<Vec<f64>>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            threads: 0,
            method: Method::CsrNet,
            pilots: 4,
            snr_db: None,
            pretrain_snr_db: 15.0,
            frozen_layers: None,
            shape: NetworkShape::FULL,
            scaling: ScalingFactor::default(),
            training: TrainingConfig::default(),
            configs: ["LS-2", "LS-4", "DNN-2", "DNN-4", "CSRNet-2", "CSRNet-4", "FullCsi"]
                .iter()
                .map(|s| s.parse().unwrap())
                .collect(),
            eval_snr_grid: None,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: Debug,
{
    raw.parse()
        .map_err(|e| CliError::semantic(format!("bad value {raw:?} for key `{key}`: {e:?}")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Debug,
{
    raw.split(',').map(|p| value(key, p.trim())).collect()
}

fn flag(key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::semantic(format!("bad value {raw:?} for key `{key}`: expected true or false"))),
    }
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::parse(format!("line {}: expected `key = value`", n + 1)));
            };
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(CliError::parse(format!("line {}: unknown key `{k}`", n + 1)));
            }
            if entries.iter().any(|(prev, _): &(&str, &str)| *prev == k) {
                return Err(CliError::parse(format!("line {}: duplicate key `{k}`", n + 1)));
            }
            entries.push((k, v.trim()));
        }
        let get = |k: &str| entries.iter().find(|(key, _)| *key == k).map(|e| e.1);

        let mut s = Settings::default();
        // The sub-band keeps the default subcarrier spacing unless a
        // bandwidth is given explicitly.
        if let Some(v) = get("n_subcarriers") {
            s.dataset.ofdm = OfdmConfig::subband(value("n_subcarriers", v)?);
        }
        for &(k, v) in &entries {
            let d = &mut s.dataset;
            let e = &mut d.env;
            let t = &mut s.training;
            match k {
                "seed" => d.seed = value(k, v)?,
                "threads" => s.threads = value(k, v)?,
                "n_frames" => d.n_frames = value(k, v)?,
                "split_train" => d.split[0] = value(k, v)?,
                "split_val" => d.split[1] = value(k, v)?,
                "split_test" => d.split[2] = value(k, v)?,
                "snr_grid" => d.snr_grid = list(k, v)?,
                "n_subcarriers" => {}
                "n_symbols" => d.ofdm.n_symbols = value(k, v)?,
                "carrier" => d.ofdm.carrier = value(k, v)?,
                "bandwidth" => d.ofdm.bandwidth = value(k, v)?,
                "water_depth" => e.water_depth = value(k, v)?,
                "tx_depth" => e.tx_depth = value(k, v)?,
                "rx_depth" => e.rx_depth = value(k, v)?,
                "range" => e.range = value(k, v)?,
                "spreading_factor" => e.spreading_factor = value(k, v)?,
                "c_water" => e.c_water = value(k, v)?,
                "c_bottom" => e.c_bottom = value(k, v)?,
                "bottom_density_ratio" => e.bottom_density_ratio = value(k, v)?,
                "n_intrapaths" => e.n_intrapaths = value(k, v)?,
                "tx_drift" => e.tx_drift = value(k, v)?,
                "rx_drift" => e.rx_drift = value(k, v)?,
                "tx_vehicular_sigma" => e.tx_vehicular_sigma = value(k, v)?,
                "rx_vehicular" => e.rx_vehicular = value(k, v)?,
                "n_macro_paths" => e.n_macro_paths = value(k, v)?,
                "intrapath_delay_mean" => e.intrapath_delay_mean = value(k, v)?,
                "intrapath_gain_decay" => e.intrapath_gain_decay = value(k, v)?,
                "reference_frequency" => e.reference_frequency = value(k, v)?,
                "doppler_compensation" => e.doppler_compensation = flag(k, v)?,
                "method" => s.method = value(k, v)?,
                "pilots" => s.pilots = value(k, v)?,
                "snr_db" => s.snr_db = Some(value(k, v)?),
                "pretrain_snr_db" => s.pretrain_snr_db = value(k, v)?,
                "frozen_layers" => s.frozen_layers = Some(value(k, v)?),
                "depth" => s.shape.depth = value(k, v)?,
                "width" => s.shape.width = value(k, v)?,
                "lrelu_slope" => s.shape.lrelu_slope = value(k, v)?,
                "scaling_factor" => {
                    s.scaling = ScalingFactor::new(value(k, v)?).map_err(|e| CliError::semantic(e.to_string()))?
                }
                "initial_lr" => t.initial_lr = value(k, v)?,
                "lr_decay" => t.lr_decay = value(k, v)?,
                "decay_every" => t.decay_every = value(k, v)?,
                "max_epochs" => t.max_epochs = value(k, v)?,
                "patience" => t.early_stop_patience = value(k, v)?,
                "batch_size" => t.batch_size = value(k, v)?,
                "optimizer" => {
                    t.optimizer = match v {
                        "sgd" => Optimizer::Sgd,
                        "momentum" => Optimizer::default(),
                        "adam" => Optimizer::ADAM,
                        _ => return Err(CliError::semantic(format!("unknown optimizer {v:?}"))),
                    }
                }
                "momentum" => {}
                "clip_norm" => {
                    let c: f64 = value(k, v)?;
                    t.clip_norm = (c > 0.0).then_some(c);
                }
                "loss_weighting" => {
                    t.loss_weighting = match v {
                        "uniform" => LossWeighting::Uniform,
                        "raw_error" => LossWeighting::RawError,
                        _ => return Err(CliError::semantic(format!("unknown loss weighting {v:?}"))),
                    }
                }
                "configs" => s.configs = list(k, v)?,
                "eval_snr_grid" => s.eval_snr_grid = Some(list(k, v)?),
                _ => unreachable!("key list checked above"),
            }
        }
        if let Some(v) = get("momentum") {
            match &mut s.training.optimizer {
                Optimizer::Momentum { momentum } => *momentum = value("momentum", v)?,
                _ => return Err(CliError::semantic("`momentum` only applies to the momentum optimizer")),
            }
        }
        s.training.seed = s.dataset.seed;
        Ok(s)
    }

    /// Checks everything the subcommands rely on.
    pub fn validate(&self) -> Result<(), CliError> {
        let sem = |e: crate::Error| CliError::semantic(e.to_string());
        self.dataset.validate().map_err(sem)?;
        self.shape.validate().map_err(sem)?;
        self.training.validate().map_err(sem)?;
        if !crate::experiments::PILOT_COUNTS.contains(&self.pilots) {
            return Err(CliError::semantic(format!("pilots must be 2 or 4, got {}", self.pilots)));
        }
        if matches!(self.method, Method::Ls | Method::FullCsi) {
            return Err(CliError::semantic("only CSRNet and DNN can be trained"));
        }
        if self.frozen_layers.is_some_and(|n| n > self.shape.depth) {
            return Err(CliError::semantic("frozen_layers exceeds depth"));
        }
        Ok(())
    }

    /// Applies the `--seed` override.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.dataset.seed = seed;
            self.training.seed = seed;
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.dataset.seed
    }
}
