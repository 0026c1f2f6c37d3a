//! Composite loss, learning-rate schedule, AdamW, the epoch loop and
//! checkpoint persistence.

mod checkpoint;
mod loss;
mod optim;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{ModelCheckpoint, NamedTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{decoded_loss, huber, huber_grad, total_loss, LossConfig, LossInputs, LossValue};
pub use optim::{clip_grad_norm, global_grad_norm, lr_at_step, AdamW, AdamWConfig, Schedule};

use crate::em_forward::{SampleLayout, SampleTensor};
use crate::synth_data::{parameter_names, sample_weights, Dataset, Record, Split, TrainNoise};
use crate::tcn_core::{batch_tensor, Mode, Network, NetworkConfig, PredictionGrad};
use crate::{Error, Result};

const AUGMENT_SALT: u64 = 0x5eed_a0a0_0000_0001;
const DROPOUT_SALT: u64 = 0x5eed_d0d0_0000_0002;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: usize,
    pub warmup_div: f64,
    pub optimizer: AdamWConfig,
    pub noise: TrainNoise,
    pub seed: u64,
    /// Where the best-validation checkpoint is written, if anywhere.
    pub checkpoint: Option<PathBuf>,
    pub network: NetworkConfig,
    pub layout: SampleLayout,
    pub loss: LossConfig,
    /// Weight samples by inverse normalized seafloor conductivity.
    pub sample_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            peak_lr: 5e-4,
            final_lr: 5e-6,
            warmup_epochs: 5,
            warmup_div: 25.0,
            optimizer: AdamWConfig::default(),
            noise: TrainNoise::default(),
            seed: 0,
            checkpoint: None,
            network: NetworkConfig::default(),
            layout: SampleLayout::Standard,
            loss: LossConfig::default(),
            sample_weighting: false,
        }
    }
}

impl TrainConfig {
    /// Reduced budget for CPU runs: small network, 20 epochs, batch 64,
    /// one warm-up epoch.
    pub fn desk() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            warmup_epochs: 1,
            network: NetworkConfig::small(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be >= 2 for batch normalization".into()));
        }
        if !(self.peak_lr > 0.0 && self.final_lr > 0.0 && self.warmup_div > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.loss.weights.len() != self.network.outputs {
            return Err(Error::Config(format!(
                "{} loss weights for {} network outputs",
                self.loss.weights.len(),
                self.network.outputs
            )));
        }
        self.noise.validate()?;
        self.loss.validate()?;
        self.network.validate()
    }
}

/// One row of the epoch log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Per-parameter validation RMSE in normalized units.
    pub val_rmse: Vec<f64>,
    /// Learning rate of the last step of the epoch.
    pub lr: f64,
    /// Mean amplitude-augmentation scale drawn during the epoch.
    pub amp_sigma: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: ModelCheckpoint,
    pub log: Vec<EpochRecord>,
}

/// Write the epoch log as CSV with one RMSE column per parameter.
pub fn write_epoch_log(w: impl Write, k: usize, log: &[EpochRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["epoch".to_string(), "train_loss".into(), "val_loss".into()];
    header.extend(parameter_names(k).iter().map(|n| format!("val_rmse_{n}")));
    header.extend(["lr".to_string(), "amp_sigma".into()]);
    out.write_record(&header)?;
    for r in log {
        let mut row = vec![r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()];
        row.extend(r.val_rmse.iter().map(|v| v.to_string()));
        row.extend([r.lr.to_string(), r.amp_sigma.to_string()]);
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

fn augment_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ AUGMENT_SALT);
    rng.set_stream(((epoch as u64) << 40) | index as u64);
    rng
}

/// Eval-mode predictions, one `K`-vector per sample.
pub fn predict_params(net: &Network, samples: &[SampleTensor], batch_size: usize) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&SampleTensor> = chunk.iter().collect();
        let pred = net.predict(&batch_tensor(&refs)?, Mode::Eval, &mut rng)?;
        out.extend((0..pred.batch).map(|b| pred.sample(b).to_vec()));
    }
    Ok(out)
}

/// Clean input tensors of a record slice.
pub fn record_tensors(records: &[Record], layout: SampleLayout) -> Result<Vec<SampleTensor>> {
    records.par_iter().map(|r| r.tensor(layout)).collect()
}

struct Validation {
    loss: f64,
    rmse: Vec<f64>,
}

fn validate_epoch(
    net: &Network,
    inputs: &[SampleTensor],
    records: &[Record],
    cfg: &TrainConfig,
    ranges: &crate::synth_data::ParamRanges,
) -> Result<Validation> {
    let k = cfg.network.outputs;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss = 0.0;
    let mut sq = vec![0.0; k];
    for (xs, rs) in inputs.chunks(cfg.batch_size).zip(records.chunks(cfg.batch_size)) {
        let refs: Vec<&SampleTensor> = xs.iter().collect();
        let pred = net.predict(&batch_tensor(&refs)?, Mode::Eval, &mut rng)?;
        let targets: Vec<f64> = rs.iter().flat_map(|r| r.targets_f64()).collect();
        let v = decoded_loss(&pred, &targets, None, None, &cfg.loss, ranges, false)?;
        loss += v.total * rs.len() as f64;
        for (i, (p, t)) in pred.theta.iter().zip(&targets).enumerate() {
            sq[i % k] += (p - t) * (p - t);
        }
    }
    let n = records.len() as f64;
    Ok(Validation { loss: loss / n, rmse: sq.iter().map(|s| (s / n).sqrt()).collect() })
}

/// Train on the train split, select on the validation split.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(dataset, cfg, |_| {})
}

pub fn train_with_progress(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let k = cfg.network.outputs;
    let ranges = &dataset.header.ranges;
    if dataset.header.targets() != k {
        return Err(Error::Config(format!("dataset has {} targets, network predicts {k}", dataset.header.targets())));
    }
    let channels = cfg.layout.channels(dataset.header.receivers());
    if channels != cfg.network.in_channels {
        return Err(Error::Config(format!(
            "{:?} layout yields {channels} channels, network expects {}",
            cfg.layout, cfg.network.in_channels
        )));
    }
    let train_set = dataset.split(Split::Train);
    let val_set = dataset.split(Split::Val);
    if train_set.len() < 2 || val_set.is_empty() {
        return Err(Error::Config("dataset too small for a train/validation split".into()));
    }
    let val_inputs = record_tensors(val_set, cfg.layout)?;
    let weights = cfg
        .sample_weighting
        .then(|| sample_weights(&train_set.iter().map(|r| r.targets[1] as f64).collect::<Vec<_>>()));

    let bs = cfg.batch_size.min(train_set.len());
    // A trailing batch of one sample cannot be batch-normalized.
    let steps_per_epoch = train_set.len() / bs + usize::from(train_set.len() % bs >= 2);
    let schedule = Schedule {
        peak_lr: cfg.peak_lr,
        final_lr: cfg.final_lr,
        warmup_div: cfg.warmup_div,
        warmup_steps: cfg.warmup_epochs * steps_per_epoch,
        total_steps: cfg.epochs * steps_per_epoch,
    };

    let mut net = Network::new(cfg.network.clone(), cfg.seed)?;
    let mut opt = AdamW::new(cfg.optimizer, &net.params_mut());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ DROPOUT_SALT);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<ModelCheckpoint> = None;
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let mut shuffle = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle.set_stream(epoch as u64);
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut amp_sum, mut lr) = (0.0, 0.0, cfg.peak_lr);
        for batch in order.chunks(bs).take(steps_per_epoch) {
            let augmented: Vec<(SampleTensor, f64)> = batch
                .par_iter()
                .map(|&i| {
                    let mut x = train_set[i].tensor(cfg.layout)?;
                    let amp = cfg.noise.apply(&mut x, epoch, &mut augment_rng(cfg.seed, epoch, i))?;
                    Ok((x, amp))
                })
                .collect::<Result<_>>()?;
            amp_sum += augmented.iter().map(|(_, a)| a).sum::<f64>();
            let refs: Vec<&SampleTensor> = augmented.iter().map(|(x, _)| x).collect();
            let x = batch_tensor(&refs)?;
            let targets: Vec<f64> = batch.iter().flat_map(|&i| train_set[i].targets_f64()).collect();
            let aux_t: Vec<f64> = batch.iter().map(|&i| train_set[i].seafloor_target(ranges)).collect();
            let sw: Option<Vec<f64>> = weights.as_ref().map(|w| batch.iter().map(|&i| w[i]).collect());

            net.zero_grad();
            let pred = net.forward_train(&x, &mut dropout_rng)?;
            let v = decoded_loss(&pred, &targets, Some(&aux_t), sw.as_deref(), &cfg.loss, ranges, true)?;
            if !v.total.is_finite() {
                return Err(Error::NonFinite { context: format!("training loss at epoch {epoch}, step {step}") });
            }
            net.backward(&PredictionGrad { theta: v.grad_theta, aux: v.grad_aux })?;
            lr = lr_at_step(step, &schedule);
            opt.step(&mut net.params_mut(), lr)?;
            loss_sum += v.total;
            step += 1;
        }
        let val = validate_epoch(&net, &val_inputs, val_set, cfg, ranges)?;
        if !val.loss.is_finite() {
            return Err(Error::NonFinite { context: format!("validation loss at epoch {epoch}") });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_loss: val.loss,
            val_rmse: val.rmse,
            lr,
            amp_sigma: amp_sum / (steps_per_epoch * bs).min(train_set.len()) as f64,
        };
        if best.as_ref().map_or(true, |b| val.loss < b.best_val_loss) {
            let ck = ModelCheckpoint::from_network(&net, ranges, cfg.layout, val.loss, epoch);
            if let Some(path) = &cfg.checkpoint {
                ck.save(path)?;
            }
            best = Some(ck);
        }
        progress(&record);
        log.push(record);
    }
    Ok(TrainOutcome { best: best.expect("at least one epoch"), log })
}

/// Load a dataset file and train on it.
pub fn train_run(dataset: &Path, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train(&Dataset::load(dataset)?, cfg)
}
