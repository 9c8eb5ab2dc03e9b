//! Mini-batch SGD with a two-step learning-rate schedule, plus the λ sweep.

use std::fmt::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{instance_labels, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, EvalOptions};
use crate::model::{
    batch_loss_and_grad, init_params, mean_loss, BatchItem, Layers, Mode, ModelConfig, ModelParams,
    Targets,
};
use crate::par::Exec;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    /// First epoch (0-based) trained at `lr_final`.
    pub lr_switch_epoch: usize,
    pub momentum: f64,
    /// L2 coefficient added to the gradient.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 55,
            batch_size: 64,
            lr_initial: 0.001,
            lr_final: 0.0001,
            lr_switch_epoch: 50,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr_final >= 0.0
            && self.lr_final <= self.lr_initial
            && self.lr_initial.is_finite())
        {
            return bad("learning rates must satisfy 0 <= lr_final <= lr_initial");
        }
        if self.lr_switch_epoch == 0 || self.lr_switch_epoch > self.epochs {
            return bad("lr_switch_epoch must lie in 1..=epochs");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be finite and >= 0");
        }
        Ok(())
    }
}

pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch < cfg.lr_switch_epoch {
        cfg.lr_initial
    } else {
        cfg.lr_final
    }
}

/// `v ← μ·v − lr·g; θ ← θ + v`.
pub fn sgd_step(
    params: &mut Layers,
    grads: &Layers,
    lr: f64,
    momentum: f64,
    velocity: &mut Layers,
) {
    for ((p, g), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(velocity.tensors_mut())
    {
        for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = momentum * *vi - lr * gi;
            *pi += *vi;
        }
    }
}

/// Training images with dense identity classes and the selected attribute columns.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub identity: Vec<usize>,
    pub attributes: Vec<Vec<usize>>,
    /// Dataset identity of each identity class.
    pub classes: Vec<u32>,
    /// Schema attribute behind each attribute head.
    pub heads: Vec<usize>,
    pub class_counts: Vec<usize>,
}

impl TrainingSet {
    /// Train split of `dataset`, keeping the schema attributes listed in `heads`.
    pub fn from_dataset(dataset: &Dataset, heads: &[usize]) -> Result<Self> {
        let counts = dataset.schema.class_counts();
        if let Some(&h) = heads.iter().find(|&&h| h >= counts.len()) {
            return Err(Error::Config(format!("attribute {h} not in schema")));
        }
        let classes = dataset.identities(Split::Train);
        let mut set = TrainingSet {
            features: Vec::new(),
            identity: Vec::new(),
            attributes: Vec::new(),
            heads: heads.to_vec(),
            class_counts: heads.iter().map(|&h| counts[h]).collect(),
            classes,
        };
        for i in dataset.indices(Split::Train) {
            let s = &dataset.samples[i];
            let labels = instance_labels(s, &dataset.annotations)?;
            let id = s.identity.person().expect("train samples are persons");
            set.identity.push(
                set.classes
                    .binary_search(&id)
                    .expect("collected from train"),
            );
            set.attributes
                .push(heads.iter().map(|&h| labels[h]).collect());
            set.features
                .push(dataset.feature(i).iter().map(|&v| f64::from(v)).collect());
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn num_identities(&self) -> usize {
        self.classes.len()
    }

    fn item(&self, i: usize, mode: Mode) -> BatchItem<'_> {
        BatchItem {
            feature: &self.features[i],
            targets: Targets {
                identity: self.identity[i],
                attributes: &self.attributes[i],
            },
            mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_id: f64,
    pub loss_att_mean: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// `epoch,lr,loss_total,loss_id,loss_att_mean,seconds`. With `timing` off the
    /// seconds column is written as 0 so that logs compare byte-for-byte.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::from("epoch,lr,loss_total,loss_id,loss_att_mean,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch,
                e.lr,
                e.loss_total,
                e.loss_id,
                e.loss_att_mean,
                if timing { e.seconds } else { 0.0 }
            );
        }
        out
    }
}

pub fn train(
    model: &ModelConfig,
    cfg: &TrainConfig,
    data: &TrainingSet,
    exec: Exec,
) -> Result<(ModelParams, TrainLog)> {
    train_with(model, cfg, data, exec, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch(epoch, params)` after every epoch.
pub fn train_with(
    model: &ModelConfig,
    cfg: &TrainConfig,
    data: &TrainingSet,
    exec: Exec,
    mut on_epoch: impl FnMut(usize, &ModelParams) -> Result<()>,
) -> Result<(ModelParams, TrainLog)> {
    cfg.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if cfg.batch_size > data.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds {} training images",
            cfg.batch_size,
            data.len()
        )));
    }
    if model.num_identities != data.num_identities()
        || model.attribute_class_counts != data.class_counts
    {
        return Err(Error::Config(
            "model heads do not match the training set".into(),
        ));
    }
    if model.input_dim != data.features[0].len() {
        return Err(Error::Shape {
            expected: format!("input_dim {}", model.input_dim),
            found: data.features[0].len().to_string(),
        });
    }

    let mut params = init_params(model, seed::derive(cfg.seed, seed::TRAIN))?;
    let mut velocity = params.layers.zeros_like();
    let shuffle_seed = seed::derive(cfg.seed, seed::SHUFFLE);
    let dropout_seed = seed::derive(cfg.seed, seed::DROPOUT);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let lr = lr_at_epoch(cfg, epoch);
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_indexed(
            shuffle_seed,
            &[epoch as u64],
        )));
        let mut losses = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
        let mut weights = Vec::with_capacity(losses.capacity());
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<BatchItem> = chunk
                .iter()
                .map(|&i| {
                    let mode = Mode::Train {
                        seed: seed::derive_indexed(dropout_seed, &[epoch as u64, i as u64]),
                    };
                    data.item(i, mode)
                })
                .collect();
            let (loss, mut grads) = batch_loss_and_grad(&params, &batch, model.lambda, exec)?;
            if cfg.weight_decay > 0.0 {
                grads.layers.add_scaled(&params.layers, cfg.weight_decay);
            }
            sgd_step(
                &mut params.layers,
                &grads.layers,
                lr,
                cfg.momentum,
                &mut velocity,
            );
            weights.push(chunk.len());
            losses.push(loss);
        }
        if !params.layers.is_finite() {
            return Err(Error::Config(format!("training diverged in epoch {epoch}")));
        }
        // Image-weighted epoch mean.
        let expanded: Vec<_> = losses
            .iter()
            .zip(&weights)
            .flat_map(|(l, &w)| std::iter::repeat_n(l.clone(), w))
            .collect();
        let mean = mean_loss(&expanded, model.lambda);
        log.epochs.push(EpochLog {
            epoch,
            lr,
            loss_total: mean.total,
            loss_id: mean.l_id,
            loss_att_mean: mean.att_mean(),
            seconds: started.elapsed().as_secs_f64(),
        });
        on_epoch(epoch, &params)?;
    }
    Ok((params, log))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub rank1: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the highest validation rank-1 (smallest λ on ties).
    pub best: usize,
    pub best_lambda: f64,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,rank1,mAP,selected\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.lambda,
                r.rank1,
                r.map,
                u8::from(i == self.best)
            );
        }
        out
    }
}

/// Index of the best rank-1; ties go to the smaller λ.
pub fn select_lambda(rows: &[SweepRow]) -> Option<usize> {
    (0..rows.len()).reduce(|best, i| {
        let (a, b) = (&rows[best], &rows[i]);
        if b.rank1 > a.rank1 || (b.rank1 == a.rank1 && b.lambda < a.lambda) {
            i
        } else {
            best
        }
    })
}

/// Trains one model per λ (same seeds) and scores each on the validation splits.
pub fn sweep_lambda(
    model: &ModelConfig,
    cfg: &TrainConfig,
    dataset: &Dataset,
    heads: &[usize],
    grid: &[f64],
    opts: &EvalOptions,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty lambda grid".into()));
    }
    if dataset.indices(Split::ValidationQuery).is_empty() {
        return Err(Error::Config("dataset has no validation queries".into()));
    }
    let data = TrainingSet::from_dataset(dataset, heads)?;
    let rows = opts
        .exec
        .map(grid.len(), |i| -> Result<SweepRow> {
            let cfg_i = ModelConfig {
                lambda: grid[i],
                ..model.clone()
            };
            let (params, _) = train(&cfg_i, cfg, &data, opts.exec)?;
            let report = evaluate_model(
                &params,
                dataset,
                Split::ValidationQuery,
                Split::ValidationGallery,
                opts,
            )?;
            Ok(SweepRow {
                lambda: grid[i],
                rank1: report.rank(1),
                map: report.map,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let best = select_lambda(&rows).expect("grid is non-empty");
    Ok(SweepResult {
        best_lambda: rows[best].lambda,
        rows,
        best,
    })
}
