//! Classification training and evaluation loops.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tagi::inference::{decay_noise, infer_minibatch, ObservationModel};
use tagi::network::{classify, encode_target, NetworkConfig, NormMode, OutputHead};
use tagi::{GaussianVector, Network, ParameterStore, Scalar};

use crate::data::{Dataset, Normalizer, Preprocessing};
use crate::error::{HarnessError, Result};
use crate::metrics::{report, MetricsReport, Record, DEFAULT_ECE_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    pub fn preprocessing(self) -> Preprocessing {
        Preprocessing::UnitRangeMeanSubtract
    }
}

/// Everything a classification run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub seed: u64,
    pub epochs: usize,
    pub batch: usize,
    pub sigma_v0: f64,
    pub eta: f64,
    pub norm: NormMode,
    pub ece_bins: usize,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(network: NetworkConfig) -> Self {
        Self {
            network,
            seed: 0,
            epochs: 1,
            batch: 16,
            sigma_v0: 1.0,
            eta: 0.975,
            norm: NormMode::None,
            ece_bins: DEFAULT_ECE_BINS,
            out: None,
        }
    }

    /// Network after applying the normalisation option.
    pub fn resolved_network(&self) -> NetworkConfig {
        if self.norm == NormMode::None {
            self.network.clone()
        } else {
            self.network.clone().with_normalization(self.norm)
        }
    }

    pub fn num_classes(&self) -> Result<usize> {
        match self.network.head {
            OutputHead::Classification { num_classes } => Ok(num_classes),
            h => Err(HarnessError::Config(format!("classification training needs a classification head, found `{h}`"))),
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_err: f64,
    pub test: MetricsReport,
    pub sigma_v: f64,
    pub clamp_count: usize,
}

pub const LOG_HEADER: &str = "epoch\ttrain_err\ttest_err\tnll\tece\tauroc\tsigma_v\tclamp_count";

impl EpochLog {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.9}\t{}",
            self.epoch,
            self.train_err,
            self.test.error_rate,
            self.test.nll,
            self.test.ece,
            self.test.auroc,
            self.sigma_v,
            self.clamp_count
        )
    }

    pub fn parse_tsv(line: &str) -> Option<EpochLog> {
        let f: Vec<&str> = line.trim().split('\t').collect();
        if f.len() != 8 {
            return None;
        }
        let num = |i: usize| f[i].parse::<f64>().ok();
        Some(EpochLog {
            epoch: f[0].parse().ok()?,
            train_err: num(1)?,
            test: MetricsReport { n: 0, error_rate: num(2)?, nll: num(3)?, ece: num(4)?, auroc: num(5)? },
            sigma_v: num(6)?,
            clamp_count: f[7].parse().ok()?,
        })
    }
}

/// Progress notifications from [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Progress {
    Batch { epoch: usize, done: usize, total: usize, running_err: f64 },
    Epoch(EpochLog),
}

pub struct TrainOutcome<T> {
    pub net: Network,
    pub params: ParameterStore<T>,
    pub obs: ObservationModel,
    pub history: Vec<EpochLog>,
}

/// Probability records for every element of `data`, evaluated in batches of `batch`.
pub fn predict_records<T: Scalar>(
    net: &Network,
    params: &ParameterStore<T>,
    data: &Dataset,
    norm: &Normalizer,
    batch: usize,
) -> Result<Vec<Record>> {
    if data.is_empty() {
        return Err(HarnessError::Data(format!("{} is empty", data.name)));
    }
    // a trailing single element cannot be batch-normalised on its own
    let batch = batch.max(if net.uses_batch_norm() { 2 } else { 1 });
    let mut records = Vec::with_capacity(data.len());
    let mut start = 0;
    while start < data.len() {
        let mut end = (start + batch).min(data.len());
        if net.uses_batch_norm() && data.len() - end == 1 {
            end = data.len();
        }
        let inputs: Vec<GaussianVector<T>> = (start..end).map(|i| norm.input(data, i)).collect();
        let outs = net.predict(params, &inputs)?;
        for (k, z) in outs.iter().enumerate() {
            records.push(Record::from_scores(data.labels[start + k] as usize, &classify(z).scores));
        }
        start = end;
    }
    Ok(records)
}

pub fn evaluate<T: Scalar>(
    net: &Network,
    params: &ParameterStore<T>,
    data: &Dataset,
    norm: &Normalizer,
    batch: usize,
    bins: usize,
) -> Result<MetricsReport> {
    Ok(report(&predict_records(net, params, data, norm, batch)?, bins))
}

/// Trains from a fresh initialisation: shuffle, mini-batches, noise decay and
/// evaluation every epoch. Epoch 0 is the untrained network.
pub fn train<T: Scalar>(
    cfg: &RunConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    norm: &Normalizer,
    progress: &mut dyn FnMut(Progress),
) -> Result<TrainOutcome<T>> {
    let classes = cfg.num_classes()?;
    if cfg.batch == 0 {
        return Err(HarnessError::Config("batch size must be positive".into()));
    }
    if train_set.is_empty() {
        return Err(HarnessError::Data(format!("{} is empty", train_set.name)));
    }
    let (net, mut params) = tagi::build::<T>(cfg.resolved_network(), cfg.seed)?;
    if net.input_shape() != train_set.shape {
        return Err(HarnessError::Config(format!(
            "network reads {}, dataset provides {}",
            net.input_shape(),
            train_set.shape
        )));
    }
    if net.uses_batch_norm() && cfg.batch < 2 {
        return Err(HarnessError::Config("batch normalization needs a batch of at least 2".into()));
    }
    let mut obs = ObservationModel::new(cfg.sigma_v0, cfg.eta)?;
    let mut history = Vec::new();
    let test = evaluate(&net, &params, test_set, norm, cfg.batch, cfg.ece_bins)?;
    let first = EpochLog { epoch: 0, train_err: f64::NAN, test, sigma_v: obs.sigma_v, clamp_count: 0 };
    progress(Progress::Epoch(first));
    history.push(first);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        let mut wrong = 0usize;
        let mut seen = 0usize;
        let mut clamped = 0usize;
        let total = order.len().div_ceil(cfg.batch);
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            if net.uses_batch_norm() && chunk.len() < 2 {
                continue;
            }
            let inputs: Vec<GaussianVector<T>> = chunk.iter().map(|&i| norm.input(train_set, i)).collect();
            let targets = chunk
                .iter()
                .map(|&i| encode_target::<T>(train_set.labels[i] as usize, classes, obs.sigma_v).map(|t| t.y))
                .collect::<tagi::Result<Vec<_>>>()?;
            let rep = infer_minibatch(&net, &mut params, &inputs, &targets, &obs)?;
            for (z, &i) in rep.outputs.iter().zip(chunk) {
                wrong += (classify(z).label != train_set.labels[i] as usize) as usize;
            }
            seen += chunk.len();
            clamped += rep.clamped;
            if (b + 1) % 100 == 0 || b + 1 == total {
                progress(Progress::Batch { epoch, done: b + 1, total, running_err: wrong as f64 / seen.max(1) as f64 });
            }
        }
        obs = decay_noise(obs);
        let test = evaluate(&net, &params, test_set, norm, cfg.batch, cfg.ece_bins)?;
        let log = EpochLog {
            epoch,
            train_err: wrong as f64 / seen.max(1) as f64,
            test,
            sigma_v: obs.sigma_v,
            clamp_count: clamped,
        };
        progress(Progress::Epoch(log));
        history.push(log);
    }
    Ok(TrainOutcome { net, params, obs, history })
}

/// Writes the tab-separated metrics log.
pub fn write_log(path: &std::path::Path, history: &[EpochLog]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut text = format!("{LOG_HEADER}\n");
    for h in history {
        text.push_str(&h.tsv());
        text.push('\n');
    }
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}
