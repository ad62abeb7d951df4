//! Estimator configurations, evaluation sweeps and the results table.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{ls_baseline, mlp_estimate, MlpCheckpoint};
use crate::csi::CsiMatrix;
use crate::error::{invalid, Error, Result};
use crate::estimation::{from_two_channel, raw_csi, scale, to_two_channel, unscale};
use crate::neuralnet::Checkpoint;
use crate::ofdm::{OfdmFrameGrid, PilotPattern};
use crate::rng::child_seed;

use super::dataset::{simulate_truth, transmit, Dataset, Split};
use super::metrics::{bootstrap_ci, frame_ber, frame_mse, mean};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
pub const CSV_HEADER: &str = "method,pilots,snr_db,mse,ber,n_frames,ci_low,ci_high";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ls,
    Dnn,
    CsrNet,
    FullCsi,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ls => "LS",
            Self::Dnn => "DNN",
            Self::CsrNet => "CSRNet",
            Self::FullCsi => "FullCsi",
        }
    }

    pub fn needs_model(&self) -> bool {
        matches!(self, Self::Dnn | Self::CsrNet)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "LS" => Ok(Self::Ls),
            "DNN" => Ok(Self::Dnn),
            "CSRNet" => Ok(Self::CsrNet),
            "FullCsi" => Ok(Self::FullCsi),
            _ => Err(invalid(format!("unknown method {s:?}"))),
        }
    }
}

/// One estimator. `FullCsi` still needs a pilot count to lay out its frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub method: Method,
    pub n_pilots: usize,
}

impl ExperimentConfig {
    pub fn new(method: Method, n_pilots: usize) -> Result<Self> {
        PilotPattern::for_count(n_pilots)?;
        Ok(Self { method, n_pilots })
    }

    /// `LS-4`, `CSRNet-2`, ... and plain `FullCsi`.
    pub fn label(&self) -> String {
        match self.method {
            Method::FullCsi => "FullCsi".into(),
            m => format!("{m}-{}", self.n_pilots),
        }
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    /// Accepts `METHOD-PILOTS`, or `FullCsi` alone (4 pilots).
    fn from_str(s: &str) -> Result<Self> {
        match s.rsplit_once('-') {
            Some((m, p)) => {
                let n: usize = p.parse().map_err(|_| invalid(format!("bad pilot count in {s:?}")))?;
                Self::new(m.parse()?, n)
            }
            None => Self::new(s.parse()?, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    CsrNet(Checkpoint),
    Mlp(MlpCheckpoint),
}

/// Trained models keyed by method, pilot count and optionally SNR.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    entries: Vec<(Method, usize, Option<f64>, Model)>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a model; a model with `snr_db = None` serves every SNR that
    /// has no dedicated entry.
    pub fn insert(&mut self, method: Method, n_pilots: usize, snr_db: Option<f64>, model: Model) -> Result<()> {
        let fits = matches!(
            (method, &model),
            (Method::CsrNet, Model::CsrNet(_)) | (Method::Dnn, Model::Mlp(_))
        );
        if !fits {
            return Err(invalid(format!("model kind does not match method {method}")));
        }
        self.entries.retain(|(m, p, s, _)| !(*m == method && *p == n_pilots && *s == snr_db));
        self.entries.push((method, n_pilots, snr_db, model));
        Ok(())
    }

    pub fn get(&self, method: Method, n_pilots: usize, snr_db: f64) -> Option<&Model> {
        let find = |snr: Option<f64>| {
            self.entries
                .iter()
                .find(|(m, p, s, _)| *m == method && *p == n_pilots && *s == snr)
                .map(|e| &e.3)
        };
        find(Some(snr_db)).or_else(|| find(None))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Residual network applied to the raw estimate of a received grid.
pub fn csrnet_estimate(ck: &Checkpoint, frame: &OfdmFrameGrid) -> Result<CsiMatrix> {
    let rx = frame.rx_symbols.as_ref().ok_or(Error::Empty("received grid"))?;
    let input = scale(&to_two_channel(&raw_csi(rx, &frame.pattern)?), ck.scaling);
    Ok(from_two_channel(&unscale(&ck.network.forward(&input)?, ck.scaling)))
}

/// Full CSI estimate of one configuration for a transmitted frame.
pub fn estimate_csi(
    cfg: &ExperimentConfig,
    models: &ModelSet,
    snr_db: f64,
    frame: &OfdmFrameGrid,
    truth: &CsiMatrix,
) -> Result<CsiMatrix> {
    let missing = || Error::MissingArtifact(format!("no model for {} at {snr_db} dB", cfg.label()));
    let rx = frame.rx_symbols.as_ref().ok_or(Error::Empty("received grid"))?;
    match cfg.method {
        Method::FullCsi => Ok(truth.clone()),
        Method::Ls => ls_baseline(rx, &frame.pattern),
        Method::Dnn => match models.get(Method::Dnn, cfg.n_pilots, snr_db).ok_or_else(missing)? {
            Model::Mlp(ck) => mlp_estimate(&ck.network, rx, &frame.pattern, ck.scaling),
            Model::CsrNet(_) => Err(missing()),
        },
        Method::CsrNet => match models.get(Method::CsrNet, cfg.n_pilots, snr_db).ok_or_else(missing)? {
            Model::CsrNet(ck) => csrnet_estimate(ck, frame),
            Model::Mlp(_) => Err(missing()),
        },
    }
}

/// Per-frame scores of one configuration at one SNR, in test-record order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    pub mse: Vec<f64>,
    pub ber: Vec<f64>,
}

/// Re-simulates every test record at `snr_db` and scores `cfg` on it.
pub fn score_config(ds: &Dataset, cfg: &ExperimentConfig, models: &ModelSet, snr_db: f64) -> Result<FrameScores> {
    let pattern = PilotPattern::for_count(cfg.n_pilots)?;
    if cfg.method.needs_model() && models.get(cfg.method, cfg.n_pilots, snr_db).is_none() {
        return Err(Error::MissingArtifact(format!("no model for {} at {snr_db} dB", cfg.label())));
    }
    let records = ds.select(Split::Test, None);
    let scores = records
        .par_iter()
        .map(|r| {
            let h = simulate_truth(&ds.spec.env, &ds.spec.ofdm, r.seed)?;
            let frame = transmit(&ds.spec.ofdm, &pattern, &h, r.seed, snr_db)?;
            let est = estimate_csi(cfg, models, snr_db, &frame, &h)?;
            Ok((frame_mse(&est, &h)?, frame_ber(&frame, &est)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameScores {
        mse: scores.iter().map(|s| s.0).collect(),
        ber: scores.iter().map(|s| s.1).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub pilots: usize,
    pub snr_db: f64,
    pub mse: f64,
    pub ber: f64,
    pub n_frames: usize,
    /// Bootstrap interval of the mean MSE.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.method, r.pilots, r.snr_db, r.mse, r.ber, r.n_frames, r.ci_low, r.ci_high
            )
            .unwrap();
        }
        s
    }

    pub fn find(&self, method: &str, pilots: usize, snr_db: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method && r.pilots == pilots && r.snr_db == snr_db)
    }
}

/// Scores every configuration at every SNR on the test split and returns
/// rows sorted by method name, pilot count and SNR.
pub fn run_suite(
    ds: &Dataset,
    configs: &[ExperimentConfig],
    snr_grid: &[f64],
    models: &ModelSet,
    seed: u64,
) -> Result<ResultTable> {
    let mut rows = Vec::with_capacity(configs.len() * snr_grid.len());
    for (ci, cfg) in configs.iter().enumerate() {
        for (si, &snr) in snr_grid.iter().enumerate() {
            let scores = score_config(ds, cfg, models, snr)?;
            let mse = mean(&scores.mse);
            let boot_seed = child_seed(child_seed(seed, ci as u64), si as u64);
            let (lo, hi) = bootstrap_ci(&scores.mse, BOOTSTRAP_RESAMPLES, 0.95, boot_seed)?;
            rows.push(ResultRow {
                method: cfg.method.to_string(),
                pilots: cfg.n_pilots,
                snr_db: snr,
                mse,
                ber: mean(&scores.ber),
                n_frames: scores.mse.len(),
                ci_low: lo.min(mse),
                ci_high: hi.max(mse),
            });
        }
    }
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.pilots.cmp(&b.pilots))
            .then(a.snr_db.total_cmp(&b.snr_db))
    });
    Ok(ResultTable { rows })
}
