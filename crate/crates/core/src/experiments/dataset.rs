//! Seeded frame simulation and the `UWDS` dataset container.
//!
//! Each record keeps its seed, so any frame can be regenerated bit for bit:
//! the channel comes from the record's `Channel` stream, payload bits from
//! `Payload` and the unit noise grid from `Noise`. Frames built for different
//! pilot patterns or SNRs therefore share the same channel and noise draw.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::baselines::MlpSample;
use crate::channel::{realize_channel, sample_csi, EnvironmentConfig};
use crate::codec::{Reader, Writer};
use crate::csi::{CsiMatrix, TwoChannelCsi};
use crate::error::{invalid, Error, Result};
use crate::estimation::{from_two_channel, raw_csi, scale, to_two_channel, ScalingFactor};
use crate::neuralnet::{FeatureMap, TrainingPair};
use crate::ofdm::{apply_channel, build_frame, OfdmConfig, OfdmFrameGrid, PilotPattern};
use crate::rng::{child_seed, rng_for, Stream};

pub const DATASET_MAGIC: &[u8; 4] = b"UWDS";
pub const DATASET_VERSION: u32 = 1;

/// Pilot symbol counts every dataset carries raw estimates for.
pub const PILOT_COUNTS: [usize; 2] = [2, 4];

fn pilot_slot(n_pilots: usize) -> Result<usize> {
    PILOT_COUNTS
        .iter()
        .position(|&p| p == n_pilots)
        .ok_or_else(|| invalid(format!("unsupported pilot count {n_pilots}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        [Self::Train, Self::Validation, Self::Test].get(c as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_frames: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub snr_grid: Vec<f64>,
    pub env: EnvironmentConfig,
    pub ofdm: OfdmConfig,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n_frames: 10_000,
            split: [0.8, 0.1, 0.1],
            snr_grid: (0..=6).map(|i| 5.0 * i as f64).collect(),
            env: EnvironmentConfig::default(),
            ofdm: OfdmConfig::default(),
            seed: 0,
        }
    }
}

impl DatasetSpec {
    /// 500 frames on a 64-subcarrier sub-band.
    pub fn desk() -> Self {
        Self {
            n_frames: 500,
            ofdm: OfdmConfig::subband(64),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ofdm.validate()?;
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("split fractions must be nonnegative and sum to 1"));
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return Err(invalid("SNR grid must be a nonempty list of finite values"));
        }
        if *PILOT_COUNTS.last().unwrap() > self.ofdm.n_symbols {
            return Err(invalid("frame too short for the pilot patterns"));
        }
        let [train, val, test] = self.split_counts();
        if train == 0 || val == 0 || test == 0 {
            return Err(invalid(format!(
                "{} frames leave an empty split ({train}/{val}/{test})",
                self.n_frames
            )));
        }
        Ok(())
    }

    /// Validation and test sizes are rounded down; training takes the rest.
    pub fn split_counts(&self) -> [usize; 3] {
        let n = self.n_frames as f64;
        let val = (n * self.split[1] + 1e-9).floor() as usize;
        let test = (n * self.split[2] + 1e-9).floor() as usize;
        [self.n_frames.saturating_sub(val + test), val, test]
    }
}

/// True CSI for a record seed.
pub fn simulate_truth(env: &EnvironmentConfig, ofdm: &OfdmConfig, seed: u64) -> Result<CsiMatrix> {
    let real = realize_channel(env, seed)?;
    sample_csi(&real, &ofdm.frequency_grid(), &ofdm.time_grid())
}

/// Payload bits for a record seed; patterns with fewer data symbols get a
/// prefix of the same bit stream.
pub fn payload_bits(ofdm: &OfdmConfig, pattern: &PilotPattern, seed: u64) -> Vec<u8> {
    let mut rng = rng_for(seed, Stream::Payload);
    let all: Vec<u8> = (0..2 * ofdm.n_subcarriers * ofdm.n_symbols).map(|_| rng.random_range(0..2u8)).collect();
    all[..pattern.payload_len(ofdm)].to_vec()
}

/// Builds and transmits the frame of a record through `h` at `snr_db`.
pub fn transmit(
    ofdm: &OfdmConfig,
    pattern: &PilotPattern,
    h: &CsiMatrix,
    seed: u64,
    snr_db: f64,
) -> Result<OfdmFrameGrid> {
    let mut frame = build_frame(ofdm, pattern, &payload_bits(ofdm, pattern, seed))?;
    frame.rx_symbols = Some(apply_channel(&frame, h, snr_db, seed)?);
    Ok(frame)
}

/// Row of plane-major `f32` values, the storage form of a complex matrix.
fn pack(h: &CsiMatrix) -> Vec<f32> {
    to_two_channel(h).as_slice().iter().map(|&v| v as f32).collect()
}

fn unpack(data: &[f32], s: usize, m: usize) -> TwoChannelCsi {
    TwoChannelCsi::new(s, m, data.iter().map(|&v| v as f64).collect()).expect("stored block has the grid size")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub seed: u64,
    pub snr_db: f64,
    pub split: Split,
    truth: Vec<f32>,
    /// One raw estimate per entry of [`PILOT_COUNTS`].
    raw: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub records: Vec<Record>,
}

/// Simulates every frame of `spec`, tags it with an SNR from the grid and
/// assigns it to a split.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..spec.n_frames).collect();
    order.shuffle(&mut rng_for(spec.seed, Stream::Split));
    let [n_train, n_val, _] = spec.split_counts();
    let mut splits = vec![Split::Test; spec.n_frames];
    for (rank, &i) in order.iter().enumerate() {
        splits[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }
    let records = (0..spec.n_frames)
        .into_par_iter()
        .map(|i| {
            let seed = child_seed(spec.seed, i as u64);
            let snr_db = spec.snr_grid[rng_for(seed, Stream::SnrTag).random_range(0..spec.snr_grid.len())];
            let h = simulate_truth(&spec.env, &spec.ofdm, seed)?;
            let raw = PILOT_COUNTS
                .iter()
                .map(|&p| {
                    let pattern = PilotPattern::for_count(p)?;
                    let frame = transmit(&spec.ofdm, &pattern, &h, seed, snr_db)?;
                    Ok(pack(&raw_csi(frame.rx_symbols.as_ref().unwrap(), &pattern)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Record {
                seed,
                snr_db,
                split: splits[i],
                truth: pack(&h),
                raw,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        spec: spec.clone(),
        records,
    })
}

impl Dataset {
    pub fn shape(&self) -> (usize, usize) {
        (self.spec.ofdm.n_subcarriers, self.spec.ofdm.n_symbols)
    }

    pub fn truth(&self, r: &Record) -> CsiMatrix {
        from_two_channel(&self.truth_two_channel(r))
    }

    pub fn truth_two_channel(&self, r: &Record) -> TwoChannelCsi {
        let (s, m) = self.shape();
        unpack(&r.truth, s, m)
    }

    /// Unscaled raw estimate (LS plus interpolation) in two-channel form.
    pub fn raw_two_channel(&self, r: &Record, n_pilots: usize) -> Result<TwoChannelCsi> {
        let (s, m) = self.shape();
        Ok(unpack(&r.raw[pilot_slot(n_pilots)?], s, m))
    }

    /// Records in `split`, optionally restricted to one SNR tag.
    pub fn select(&self, split: Split, snr_db: Option<f64>) -> Vec<&Record> {
        self.records
            .iter()
            .filter(|r| r.split == split && snr_db.is_none_or(|s| r.snr_db == s))
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    /// Scaled `(raw, truth)` pairs for the residual network.
    pub fn training_pairs(
        &self,
        split: Split,
        snr_db: Option<f64>,
        n_pilots: usize,
        factor: ScalingFactor,
    ) -> Result<Vec<TrainingPair>> {
        self.select(split, snr_db)
            .into_iter()
            .map(|r| {
                let input = scale(&self.raw_two_channel(r, n_pilots)?, factor);
                let target = scale(&self.truth_two_channel(r), factor);
                Ok((FeatureMap::from(&input), FeatureMap::from(&target)))
            })
            .collect()
    }

    /// Scaled per-subcarrier samples for the fully connected baseline: the
    /// raw estimate on the pilot columns against the true row.
    pub fn mlp_samples(
        &self,
        split: Split,
        snr_db: Option<f64>,
        n_pilots: usize,
        factor: ScalingFactor,
    ) -> Result<Vec<MlpSample>> {
        let pattern = PilotPattern::for_count(n_pilots)?;
        let (s_n, m_n) = self.shape();
        let k = factor.value();
        let mut out = Vec::new();
        for r in self.select(split, snr_db) {
            let raw = self.raw_two_channel(r, n_pilots)?;
            let truth = self.truth_two_channel(r);
            for s in 0..s_n {
                let mut x = Vec::with_capacity(2 * pattern.len());
                for plane in 0..2 {
                    x.extend(pattern.indices().iter().map(|&m| k * raw.plane(plane)[s * m_n + m]));
                }
                let mut t = Vec::with_capacity(2 * m_n);
                for plane in 0..2 {
                    t.extend(truth.plane(plane)[s * m_n..(s + 1) * m_n].iter().map(|v| k * v));
                }
                out.push((x, t));
            }
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = &self.spec;
        let (env, ofdm) = (&spec.env, &spec.ofdm);
        let mut w = Writer::new();
        w.bytes(DATASET_MAGIC);
        w.u32(DATASET_VERSION);
        w.len_u32(ofdm.n_subcarriers);
        w.len_u32(ofdm.n_symbols);
        w.len_u32(self.records.len());
        for split in [Split::Train, Split::Validation, Split::Test] {
            w.len_u32(self.count(split));
        }
        w.len_u32(spec.snr_grid.len());
        for &s in &spec.snr_grid {
            w.f64(s);
        }
        w.u64(spec.seed);
        for f in spec.split {
            w.f64(f);
        }
        w.f64(ofdm.carrier);
        w.f64(ofdm.bandwidth);
        for v in [
            env.water_depth,
            env.tx_depth,
            env.rx_depth,
            env.range,
            env.spreading_factor,
            env.c_water,
            env.c_bottom,
            env.bottom_density_ratio,
            env.tx_drift,
            env.rx_drift,
            env.tx_vehicular_sigma,
            env.rx_vehicular,
            env.intrapath_delay_mean,
            env.intrapath_gain_decay,
            env.reference_frequency,
        ] {
            w.f64(v);
        }
        w.len_u32(env.n_intrapaths);
        w.len_u32(env.n_macro_paths);
        w.u8(env.doppler_compensation as u8);
        w.len_u32(PILOT_COUNTS.len());
        for p in PILOT_COUNTS {
            w.len_u32(p);
        }
        for r in &self.records {
            w.u64(r.seed);
            w.f64(r.snr_db);
            w.u8(r.split.code());
            for block in std::iter::once(&r.truth).chain(&r.raw) {
                for &v in block {
                    w.f32(v);
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dataset");
        r.expect_magic(DATASET_MAGIC)?;
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let s = r.usize()?;
        let m = r.usize()?;
        let n = r.usize()?;
        let counts = [r.usize()?, r.usize()?, r.usize()?];
        let n_snr = r.usize()?;
        let snr_grid = (0..n_snr).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let seed = r.u64()?;
        let split = [r.f64()?, r.f64()?, r.f64()?];
        let carrier = r.f64()?;
        let bandwidth = r.f64()?;
        let mut f = [0.0; 15];
        for v in &mut f {
            *v = r.f64()?;
        }
        let env = EnvironmentConfig {
            water_depth: f[0],
            tx_depth: f[1],
            rx_depth: f[2],
            range: f[3],
            spreading_factor: f[4],
            c_water: f[5],
            c_bottom: f[6],
            bottom_density_ratio: f[7],
            tx_drift: f[8],
            rx_drift: f[9],
            tx_vehicular_sigma: f[10],
            rx_vehicular: f[11],
            intrapath_delay_mean: f[12],
            intrapath_gain_decay: f[13],
            reference_frequency: f[14],
            n_intrapaths: r.usize()?,
            n_macro_paths: r.usize()?,
            doppler_compensation: r.bool()?,
        };
        let n_patterns = r.usize()?;
        let patterns = (0..n_patterns).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        if patterns != PILOT_COUNTS {
            return Err(r.fail(format!("unexpected pilot counts {patterns:?}")));
        }
        let ofdm = OfdmConfig {
            n_subcarriers: s,
            n_symbols: m,
            carrier,
            bandwidth,
            ..OfdmConfig::default()
        };
        let block = 2 * s * m;
        let mut records = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let seed = r.u64()?;
            let snr_db = r.f64()?;
            let code = r.u8()?;
            let split = Split::from_code(code).ok_or_else(|| r.fail(format!("bad split code {code}")))?;
            let mut blocks = (0..=PILOT_COUNTS.len())
                .map(|_| Ok(r.f32_block(block)?.into_iter().map(|v| v as f32).collect()))
                .collect::<Result<Vec<Vec<f32>>>>()?;
            let truth = blocks.remove(0);
            records.push(Record {
                seed,
                snr_db,
                split,
                truth,
                raw: blocks,
            });
        }
        r.finish()?;
        let ds = Dataset {
            spec: DatasetSpec {
                n_frames: n,
                split,
                snr_grid,
                env,
                ofdm,
                seed,
            },
            records,
        };
        ds.spec.validate()?;
        if [Split::Train, Split::Validation, Split::Test].map(|sp| ds.count(sp)) != counts {
            return Err(Error::Format("dataset: split counts disagree with the header".into()));
        }
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
