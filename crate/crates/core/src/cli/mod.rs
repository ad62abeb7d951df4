//! Command-line front end: `dataset`, `train` and `eval`.
//!
//! Exit codes: 0 success, 2 configuration syntax or unknown key, 3 invalid
//! value, 4 I/O failure, 5 missing model or dataset.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::baselines::MlpCheckpoint;
use crate::error::Error;
use crate::experiments::{
    generate_dataset, run_suite, train_csrnet, train_mlp, transfer_csrnet, Dataset, ExperimentConfig, Method, Model,
    ModelSet,
};
use crate::neuralnet::{Checkpoint, LossReport};

pub use config::Settings;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn semantic(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 4, message: message.into() }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        Self { code: 5, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::ShapeMismatch { .. } | Error::Empty(_) => 3,
            Error::Io(_) | Error::Format(_) => 4,
            Error::MissingArtifact(_) => 5,
        };
        Self { code, message: e.to_string() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "csrnet", version, about = "Underwater acoustic OFDM channel estimation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    /// One SNR tag of the dataset.
    Individual,
    /// The pretraining SNR tag (15 dB unless configured).
    Pretrain,
    /// Fine-tune a pretrained model on every tag with half its layers frozen.
    Transfer,
    /// Every tag, from scratch.
    Mixed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate frames and write a dataset file.
    Dataset {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a CSRNet or DNN model on a dataset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        mode: TrainMode,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long)]
        pretrained: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate estimators on the test split and write a results CSV.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        dataset: PathBuf,
        /// `LABEL[@SNR]=PATH`, e.g. `CSRNet-4=model.csrn` or `DNN-2@10=dnn.mlpb`.
        #[arg(long = "model")]
        models: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn load_settings(path: Option<&Path>, seed: Option<u64>) -> Result<Settings, CliError> {
    let settings = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::io(format!("cannot read config {}: {e}", p.display())))?;
            Settings::parse(&text)?
        }
        None => Settings::default(),
    }
    .with_seed(seed);
    settings.validate()?;
    Ok(settings)
}

fn config_hash(settings: &Settings) -> String {
    let digest = Sha256::digest(format!("{settings:?}").as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Dataset::from_bytes(&bytes)?),
        Err(e) if e.kind() == ErrorKind::NotFound => {
            Err(CliError::missing(format!("dataset {} not found", path.display())))
        }
        Err(e) => Err(CliError::io(format!("cannot read {}: {e}", path.display()))),
    }
}

fn read_artifact(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => CliError::missing(format!("model {} not found", path.display())),
        _ => CliError::io(format!("cannot read {}: {e}", path.display())),
    })
}

/// Key-value record of one run, written next to its main output.
struct Manifest {
    lines: Vec<(String, String)>,
    started: Instant,
    last: Instant,
}

impl Manifest {
    fn new(command: &str, config: Option<&Path>, settings: &Settings, out: &Path) -> Self {
        let now = Instant::now();
        let mut m = Self {
            lines: Vec::new(),
            started: now,
            last: now,
        };
        m.set("command", command);
        m.set("config", config.map_or("<defaults>".into(), |p| p.display().to_string()));
        m.set("config_sha256", config_hash(settings));
        m.set("seed", settings.seed());
        m.set("output", out.display());
        m
    }

    fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.set(&format!("time.{name}_s"), format!("{:.3}", (now - self.last).as_secs_f64()));
        self.last = now;
    }

    fn write(mut self, out: &Path) -> Result<(), CliError> {
        self.set("time.total_s", format!("{:.3}", self.started.elapsed().as_secs_f64()));
        let text = self.lines.iter().fold(String::new(), |mut s, (k, v)| {
            writeln!(s, "{k} = {v}").unwrap();
            s
        });
        write_file(&sibling(out, ".manifest"), text)
    }
}

fn with_threads<T>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::io(format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Dataset { config, out, seed } => {
            let settings = load_settings(config.as_deref(), seed)?;
            let mut manifest = Manifest::new("dataset", config.as_deref(), &settings, &out);
            let ds = with_threads(settings.threads, || generate_dataset(&settings.dataset))??;
            manifest.stage("generate");
            write_file(&out, ds.to_bytes())?;
            manifest.stage("write");
            let spec = &ds.spec;
            manifest.set("frames", ds.records.len());
            manifest.set("split_counts", format!("{:?}", spec.split_counts()));
            manifest.set("subcarriers", spec.ofdm.n_subcarriers);
            manifest.set("symbols", spec.ofdm.n_symbols);
            manifest.write(&out)
        }
        Command::Train {
            config,
            dataset,
            mode,
            snr_db,
            pretrained,
            out,
            seed,
        } => {
            let settings = load_settings(config.as_deref(), seed)?;
            let mut manifest = Manifest::new("train", config.as_deref(), &settings, &out);
            let ds = load_dataset(&dataset)?;
            manifest.stage("load");
            manifest.set("dataset", dataset.display());
            manifest.set("mode", format!("{mode:?}").to_lowercase());
            manifest.set("method", settings.method);
            manifest.set("pilots", settings.pilots);
            let (bytes, report) =
                with_threads(settings.threads, || train(&settings, &ds, mode, snr_db, pretrained.as_deref(), &mut manifest))??;
            manifest.stage("train");
            write_file(&out, bytes)?;
            write_file(&sibling(&out, ".loss.csv"), report.to_csv())?;
            manifest.set("stop_epoch", report.stop_epoch);
            manifest.set("best_epoch", report.best_epoch);
            manifest.set("stop_reason", report.stop_reason.as_str());
            manifest.set("best_val_loss", report.best_val_loss());
            manifest.write(&out)
        }
        Command::Eval {
            config,
            dataset,
            models,
            out,
            seed,
        } => {
            let settings = load_settings(config.as_deref(), seed)?;
            let mut manifest = Manifest::new("eval", config.as_deref(), &settings, &out);
            let ds = load_dataset(&dataset)?;
            let set = load_models(&models)?;
            manifest.stage("load");
            for cfg in &settings.configs {
                let needs = cfg.method.needs_model();
                if needs && !models.iter().any(|m| m.starts_with(&cfg.label())) {
                    return Err(CliError::missing(format!("no --model given for {}", cfg.label())));
                }
            }
            let grid = settings.eval_snr_grid.clone().unwrap_or_else(|| ds.spec.snr_grid.clone());
            let table = with_threads(settings.threads, || run_suite(&ds, &settings.configs, &grid, &set, settings.seed()))??;
            manifest.stage("evaluate");
            write_file(&out, table.to_csv())?;
            manifest.set("dataset", dataset.display());
            manifest.set("rows", table.rows.len());
            manifest.write(&out)
        }
    }
}

fn train(
    settings: &Settings,
    ds: &Dataset,
    mode: TrainMode,
    snr_flag: Option<f64>,
    pretrained: Option<&Path>,
    manifest: &mut Manifest,
) -> Result<(Vec<u8>, LossReport), CliError> {
    let snr = match mode {
        TrainMode::Individual => Some(
            snr_flag
                .or(settings.snr_db)
                .ok_or_else(|| CliError::semantic("individual mode needs --snr-db or snr_db"))?,
        ),
        TrainMode::Pretrain => Some(snr_flag.unwrap_or(settings.pretrain_snr_db)),
        TrainMode::Transfer | TrainMode::Mixed => None,
    };
    if let Some(s) = snr {
        if !ds.spec.snr_grid.contains(&s) {
            return Err(CliError::semantic(format!("SNR {s} dB is not in the dataset grid {:?}", ds.spec.snr_grid)));
        }
        manifest.set("snr_db", s);
    }
    let (pilots, cfg) = (settings.pilots, &settings.training);
    if mode == TrainMode::Transfer {
        if settings.method != Method::CsrNet {
            return Err(CliError::semantic("transfer mode applies to CSRNet only"));
        }
        let path = pretrained.ok_or_else(|| CliError::missing("transfer mode needs --pretrained"))?;
        let base = Checkpoint::from_bytes(&read_artifact(path)?)?;
        manifest.set("pretrained", path.display());
        let (ck, report) = transfer_csrnet(ds, &base, pilots, settings.frozen_layers, cfg)?;
        manifest.set("frozen_layers", ck.network.frozen_count());
        return Ok((ck.to_bytes(), report));
    }
    match settings.method {
        Method::CsrNet => {
            let (ck, report) = train_csrnet(ds, pilots, snr, settings.shape, cfg, settings.scaling)?;
            manifest.set("depth", ck.network.depth());
            manifest.set("width", ck.network.width());
            Ok((ck.to_bytes(), report))
        }
        Method::Dnn => {
            let (ck, report) = train_mlp(ds, pilots, snr, cfg, settings.scaling)?;
            Ok((ck.to_bytes(), report))
        }
        m => Err(CliError::semantic(format!("{m} is not trainable"))),
    }
}

/// Parses `LABEL[@SNR]=PATH` entries and loads each model.
fn load_models(specs: &[String]) -> Result<ModelSet, CliError> {
    let mut set = ModelSet::new();
    for spec in specs {
        let (key, path) = spec
            .split_once('=')
            .ok_or_else(|| CliError::parse(format!("--model expects LABEL=PATH, got {spec:?}")))?;
        let (label, snr) = match key.split_once('@') {
            Some((l, s)) => (
                l,
                Some(s.parse::<f64>().map_err(|_| CliError::semantic(format!("bad SNR in {key:?}")))?),
            ),
            None => (key, None),
        };
        let cfg: ExperimentConfig = label.parse()?;
        let bytes = read_artifact(Path::new(path))?;
        let model = match cfg.method {
            Method::CsrNet => Model::CsrNet(Checkpoint::from_bytes(&bytes)?),
            Method::Dnn => Model::Mlp(MlpCheckpoint::from_bytes(&bytes)?),
            m => return Err(CliError::semantic(format!("{m} takes no model"))),
        };
        set.insert(cfg.method, cfg.n_pilots, snr, model)?;
    }
    Ok(set)
}
