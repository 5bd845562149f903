//! The training loop: cross-entropy on each augmented image plus, when the
//! regularizer is on, a squared-distance penalty between its representation
//! and that of a copy moved to a randomly chosen other tone group.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datakit::{normalize, Augmentation, Dataset, Normalization};
use crate::error::{Error, Result};
use crate::fairmetrics::{overall_accuracy, PredictionRow, Predictions};
use crate::losses::predict;
use crate::micronet::{objective, Arch, Batch, Hyper, Model, Tensor3};
use crate::seed;
use crate::tonemap::{random_target, ToneTransform};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Arch,
    pub hyper: Hyper,
    /// `false` trains on cross-entropy alone, whatever `hyper.lambda` says.
    pub use_reg: bool,
    pub augment: bool,
    pub normalization: Normalization,
}

impl TrainConfig {
    pub fn effective_lambda(&self) -> f64 {
        if self.use_reg {
            self.hyper.lambda
        } else {
            0.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.hyper.validate()?;
        self.normalization.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_cls: f64,
    /// Zero when the invariance term is inactive (it is not computed then).
    pub l_reg: f64,
    pub l_total: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the highest validation accuracy, earliest on ties.
    pub selected_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,l_cls,l_reg,l_total,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.9},{:.9},{:.9},{:.6}",
                e.epoch, e.l_cls, e.l_reg, e.l_total, e.val_acc
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn to_tensor(model: &Model<f32>, img: &crate::Image, norm: &Normalization) -> Result<Tensor3<f32>> {
    model.tensor_from_image(&normalize(img, norm)?)
}

/// Trains a fresh model and returns it at the epoch with the best validation accuracy.
pub fn train(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    transformer: &dyn ToneTransform,
) -> Result<(Model<f32>, TrainHistory)> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    if train_set.n_classes() != cfg.arch.n_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model has {}",
            train_set.n_classes(),
            cfg.arch.n_classes
        )));
    }
    let n_groups = train_set.n_groups();
    let lambda = cfg.effective_lambda();
    let reg_active = lambda > 0.0;
    if reg_active && transformer.n_groups() < n_groups {
        return Err(Error::Config(format!(
            "tone transformer covers {} groups, data has {}",
            transformer.n_groups(),
            n_groups
        )));
    }

    let hyper = &cfg.hyper;
    let mut model = Model::<f32>::init(&cfg.arch, hyper.seed)?;
    let mut best: Option<(f64, Model<f32>)> = None;
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(hyper.epochs),
        selected_epoch: 0,
    };
    let samples = train_set.samples();

    for epoch in 0..hyper.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(hyper.seed, epoch as u64, 0xE70C));
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);

        let (mut sum_cls, mut sum_reg, mut sum_total, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut shifted = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &samples[i];
                let aug = if cfg.augment {
                    Augmentation::sample(&mut rng)
                } else {
                    Augmentation::IDENTITY
                };
                let x = aug.apply(&s.image);
                let target = random_target(s.tone, n_groups, &mut rng)?;
                if reg_active {
                    let mask = s.mask.as_ref().map(|m| aug.apply_mask(m));
                    let x_shift = transformer.transform(&x, s.tone, target, mask.as_ref())?;
                    shifted.push(to_tensor(&model, &x_shift, &cfg.normalization)?);
                }
                inputs.push(to_tensor(&model, &x, &cfg.normalization)?);
                labels.push(s.label);
            }
            let batch = Batch {
                inputs: &inputs,
                transformed: reg_active.then_some(&shifted[..]),
                labels: &labels,
            };
            let (loss, grads, _) = objective(&model, &batch, lambda)
                .map_err(|e| at_step(e, epoch, b))?;
            if !loss.l_total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch}, batch {b}"
                )));
            }
            model.sgd_step(&grads, hyper).map_err(|e| at_step(e, epoch, b))?;
            sum_cls += loss.l_cls;
            sum_reg += loss.l_reg;
            sum_total += loss.l_total;
            batches += 1;
        }

        let val_acc = overall_accuracy(&evaluate(&model, val_set, &cfg.normalization)?)?;
        let n = batches as f64;
        history.epochs.push(EpochRecord {
            epoch,
            l_cls: sum_cls / n,
            l_reg: sum_reg / n,
            l_total: sum_total / n,
            val_acc,
        });
        if best.as_ref().map_or(true, |(acc, _)| val_acc > *acc) {
            history.selected_epoch = epoch;
            best = Some((val_acc, model.clone()));
        }
    }
    let (_, model) = best.expect("at least one epoch");
    Ok((model, history))
}

fn at_step(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("{msg} (epoch {epoch}, batch {batch})")),
        other => other,
    }
}

/// Predictions for every sample, in dataset order, with normalization only.
pub fn evaluate(model: &Model<f32>, data: &Dataset, norm: &Normalization) -> Result<Predictions> {
    let mut rows = Vec::with_capacity(data.len());
    for s in data.samples() {
        let fwd = model.forward_one(&to_tensor(model, &s.image, norm)?)?;
        rows.push(PredictionRow {
            id: s.id.clone(),
            truth: s.label,
            pred: predict(&fwd.probs),
            tone: s.tone,
        });
    }
    Predictions::new(rows, data.n_groups())
}
