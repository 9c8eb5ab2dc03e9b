//! Feature transform plus M+1 softmax heads, with the weighted joint
//! identity/attribute loss and its analytic gradient.

mod checkpoint;
mod layers;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use layers::{Dense, Layers};

use crate::dataset::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::par::Exec;
use crate::seed;

/// Floor applied to probabilities inside the log.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(format!("unknown activation '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    /// K, the number of training identities.
    pub num_identities: usize,
    /// m_1..m_M. Empty gives the identity-only baseline.
    pub attribute_class_counts: Vec<usize>,
    pub dropout_rate: f64,
    /// Weight of the identity loss against the mean attribute loss.
    pub lambda: f64,
}

/// Which objective a configuration trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Identity head only.
    Baseline1,
    /// Attribute heads only (λ = 0).
    Baseline2,
    Apr,
}

impl ObjectiveMode {
    pub fn label(self) -> &'static str {
        match self {
            ObjectiveMode::Baseline1 => "baseline-1",
            ObjectiveMode::Baseline2 => "baseline-2",
            ObjectiveMode::Apr => "apr",
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if self.num_identities < 2 {
            return bad(format!(
                "need K >= 2 identities, got {}",
                self.num_identities
            ));
        }
        if let Some(m) = self.attribute_class_counts.iter().find(|&&m| m < 2) {
            return bad(format!("attribute heads need >= 2 classes, got {m}"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.attribute_class_counts.is_empty() && self.lambda == 0.0 {
            return bad("no attribute heads and lambda = 0 leaves an empty objective".into());
        }
        Ok(())
    }

    /// Width of the feature fed to the heads.
    pub fn feature_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }

    pub fn num_attributes(&self) -> usize {
        self.attribute_class_counts.len()
    }

    pub fn mode(&self) -> ObjectiveMode {
        if self.attribute_class_counts.is_empty() {
            ObjectiveMode::Baseline1
        } else if self.lambda == 0.0 {
            ObjectiveMode::Baseline2
        } else {
            ObjectiveMode::Apr
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Layers,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Layers,
}

impl Gradients {
    pub fn zeros_for(params: &ModelParams) -> Self {
        Self {
            layers: params.layers.zeros_like(),
        }
    }
}

pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams> {
    config.validate()?;
    let mut rng = seed::rng(seed);
    let mut width = config.input_dim;
    let mut hidden = Vec::with_capacity(config.hidden_dims.len());
    for &h in &config.hidden_dims {
        hidden.push(Dense::uniform(h, width, &mut rng));
        width = h;
    }
    let id_head = Dense::uniform(config.num_identities, width, &mut rng);
    let attr_heads = config
        .attribute_class_counts
        .iter()
        .map(|&m| Dense::uniform(m, width, &mut rng))
        .collect();
    Ok(ModelParams {
        config: config.clone(),
        layers: Layers {
            hidden,
            id_head,
            attr_heads,
        },
    })
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log(max(p[target], LOG_EPS))`.
pub fn cross_entropy(p: &[f64], target: usize) -> Result<f64> {
    let &pt = p.get(target).ok_or(Error::TargetOutOfRange {
        index: target,
        len: p.len(),
    })?;
    Ok(-pt.max(LOG_EPS).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active, mask drawn from `seed`.
    Train {
        seed: u64,
    },
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input followed by each hidden layer's activation.
    pub activations: Vec<Vec<f64>>,
    pub pre_activations: Vec<Vec<f64>>,
    /// Per-unit dropout multiplier on the final feature (0 or 1/(1-rate)).
    pub dropout_scale: Option<Vec<f64>>,
    /// Final feature after dropout, as seen by the heads.
    pub head_input: Vec<f64>,
    pub id_logits: Vec<f64>,
    pub attr_logits: Vec<Vec<f64>>,
}

fn dropout_mask(len: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed);
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

pub fn forward(params: &ModelParams, feature: &[f64], mode: Mode) -> Result<ForwardPass> {
    let cfg = &params.config;
    if feature.len() != cfg.input_dim {
        return Err(Error::Shape {
            expected: format!("feature of length {}", cfg.input_dim),
            found: feature.len().to_string(),
        });
    }
    let mut activations = vec![feature.to_vec()];
    let mut pre_activations = Vec::with_capacity(params.layers.hidden.len());
    for layer in &params.layers.hidden {
        let pre = layer.apply(activations.last().expect("input present"));
        activations.push(pre.iter().map(|&x| cfg.activation.apply(x)).collect());
        pre_activations.push(pre);
    }
    let last = activations.last().expect("input present");
    let dropout_scale = match mode {
        Mode::Train { seed } if cfg.dropout_rate > 0.0 => {
            Some(dropout_mask(last.len(), cfg.dropout_rate, seed))
        }
        _ => None,
    };
    let head_input = match &dropout_scale {
        Some(mask) => last.iter().zip(mask).map(|(x, m)| x * m).collect(),
        None => last.clone(),
    };
    let id_logits = params.layers.id_head.apply(&head_input);
    let attr_logits = params
        .layers
        .attr_heads
        .iter()
        .map(|h| h.apply(&head_input))
        .collect();
    Ok(ForwardPass {
        activations,
        pre_activations,
        dropout_scale,
        head_input,
        id_logits,
        attr_logits,
    })
}

/// Per-sample loss terms and the weighted total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_id: f64,
    pub l_att: Vec<f64>,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_id: f64, l_att: Vec<f64>, lambda: f64) -> Self {
        let att = mean_or_zero(&l_att);
        Self {
            l_id,
            total: lambda * l_id + att,
            l_att,
            lambda,
        }
    }

    pub fn att_mean(&self) -> f64 {
        mean_or_zero(&self.l_att)
    }
}

/// `(1/M) Σ x`, 0 for an empty slice.
fn mean_or_zero(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Targets for one training image.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub identity: usize,
    pub attributes: &'a [usize],
}

fn check_targets(cfg: &ModelConfig, t: &Targets) -> Result<()> {
    if t.identity >= cfg.num_identities {
        return Err(Error::TargetOutOfRange {
            index: t.identity,
            len: cfg.num_identities,
        });
    }
    if t.attributes.len() != cfg.num_attributes() {
        return Err(Error::Shape {
            expected: format!("{} attribute targets", cfg.num_attributes()),
            found: t.attributes.len().to_string(),
        });
    }
    for (&a, &m) in t.attributes.iter().zip(&cfg.attribute_class_counts) {
        if a >= m {
            return Err(Error::TargetOutOfRange { index: a, len: m });
        }
    }
    Ok(())
}

fn loss_from_pass(
    pass: &ForwardPass,
    targets: &Targets,
    lambda: f64,
) -> Result<(LossBreakdown, Vec<f64>, Vec<Vec<f64>>)> {
    let p_id = softmax(&pass.id_logits);
    let l_id = cross_entropy(&p_id, targets.identity)?;
    let p_att: Vec<Vec<f64>> = pass.attr_logits.iter().map(|z| softmax(z)).collect();
    let l_att = p_att
        .iter()
        .zip(targets.attributes)
        .map(|(p, &t)| cross_entropy(p, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((LossBreakdown::new(l_id, l_att, lambda), p_id, p_att))
}

pub fn joint_loss(
    params: &ModelParams,
    feature: &[f64],
    targets: Targets,
    lambda: f64,
    mode: Mode,
) -> Result<LossBreakdown> {
    check_targets(&params.config, &targets)?;
    let pass = forward(params, feature, mode)?;
    Ok(loss_from_pass(&pass, &targets, lambda)?.0)
}

/// Gradient of `-log(max(p_t, eps))` with respect to the logits, scaled by `weight`.
fn ce_logit_grad(p: &[f64], target: usize, weight: f64) -> Vec<f64> {
    if p[target] < LOG_EPS {
        // Floored branch is constant in the logits.
        return vec![0.0; p.len()];
    }
    p.iter()
        .enumerate()
        .map(|(k, &pk)| weight * (pk - if k == target { 1.0 } else { 0.0 }))
        .collect()
}

/// Loss and gradient of the total loss for one image, accumulated into `grads`.
pub fn backward_into(
    params: &ModelParams,
    feature: &[f64],
    targets: Targets,
    lambda: f64,
    mode: Mode,
    grads: &mut Gradients,
) -> Result<LossBreakdown> {
    check_targets(&params.config, &targets)?;
    let cfg = &params.config;
    let pass = forward(params, feature, mode)?;
    let (loss, p_id, p_att) = loss_from_pass(&pass, &targets, lambda)?;
    let layers = &params.layers;
    let g = &mut grads.layers;

    let mut d_feat = vec![0.0; pass.head_input.len()];
    let dz0 = ce_logit_grad(&p_id, targets.identity, lambda);
    let dx = layers
        .id_head
        .backprop(&pass.head_input, &dz0, &mut g.id_head, true);
    d_feat.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);

    if !p_att.is_empty() {
        let w = 1.0 / p_att.len() as f64;
        for (i, (p, &t)) in p_att.iter().zip(targets.attributes).enumerate() {
            let dz = ce_logit_grad(p, t, w);
            let dx =
                layers.attr_heads[i].backprop(&pass.head_input, &dz, &mut g.attr_heads[i], true);
            d_feat.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
    }

    if let Some(mask) = &pass.dropout_scale {
        d_feat.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
    }

    let mut d_out = d_feat;
    for l in (0..layers.hidden.len()).rev() {
        let pre = &pass.pre_activations[l];
        let act = &pass.activations[l + 1];
        let d_pre: Vec<f64> = d_out
            .iter()
            .zip(pre.iter().zip(act))
            .map(|(d, (&x, &y))| d * cfg.activation.derivative(x, y))
            .collect();
        d_out = layers.hidden[l].backprop(&pass.activations[l], &d_pre, &mut g.hidden[l], l > 0);
    }
    Ok(loss)
}

pub fn backward(
    params: &ModelParams,
    feature: &[f64],
    targets: Targets,
    lambda: f64,
    mode: Mode,
) -> Result<(LossBreakdown, Gradients)> {
    let mut grads = Gradients::zeros_for(params);
    let loss = backward_into(params, feature, targets, lambda, mode, &mut grads)?;
    Ok((loss, grads))
}

/// One element of a mini-batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub feature: &'a [f64],
    pub targets: Targets<'a>,
    pub mode: Mode,
}

/// Images per reduction chunk. Fixed so that summation order never depends on threads.
const GRAD_CHUNK: usize = 8;

/// Mean loss and mean gradient over the batch.
///
/// Chunks of [`GRAD_CHUNK`] images are accumulated independently and then
/// summed in chunk order, so the result is bit-identical for every `exec`.
pub fn batch_loss_and_grad(
    params: &ModelParams,
    batch: &[BatchItem],
    lambda: f64,
    exec: Exec,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let chunks = batch.len().div_ceil(GRAD_CHUNK);
    let partials = exec.map(chunks, |c| -> Result<(Vec<LossBreakdown>, Gradients)> {
        let mut g = Gradients::zeros_for(params);
        let items = &batch[c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(batch.len())];
        let losses = items
            .iter()
            .map(|it| backward_into(params, it.feature, it.targets, lambda, it.mode, &mut g))
            .collect::<Result<Vec<_>>>()?;
        Ok((losses, g))
    });

    let mut grads = Gradients::zeros_for(params);
    let mut losses = Vec::with_capacity(batch.len());
    for part in partials {
        let (l, g) = part?;
        grads.layers.add_scaled(&g.layers, 1.0);
        losses.extend(l);
    }
    let n = batch.len() as f64;
    grads.layers.scale(1.0 / n);
    Ok((mean_loss(&losses, lambda), grads))
}

/// Component-wise mean of per-sample breakdowns.
pub fn mean_loss(losses: &[LossBreakdown], lambda: f64) -> LossBreakdown {
    let n = losses.len().max(1) as f64;
    let m = losses.first().map_or(0, |l| l.l_att.len());
    let mut l_att = vec![0.0; m];
    let mut l_id = 0.0;
    let mut total = 0.0;
    for l in losses {
        l_id += l.l_id;
        total += l.total;
        for (a, v) in l_att.iter_mut().zip(&l.l_att) {
            *a += v;
        }
    }
    LossBreakdown {
        l_id: l_id / n,
        l_att: l_att.into_iter().map(|v| v / n).collect(),
        lambda,
        total: total / n,
    }
}

/// Final pre-head activation in eval mode. The input itself when there are no hidden layers.
pub fn extract_embedding(params: &ModelParams, feature: &[f64]) -> Result<Vec<f64>> {
    let mut pass = forward(params, feature, Mode::Eval)?;
    Ok(pass.activations.pop().expect("input present"))
}

/// Embeds every row of `features`.
pub fn extract_embeddings(
    params: &ModelParams,
    features: &EmbeddingMatrix,
    exec: Exec,
) -> Result<EmbeddingMatrix> {
    let dim = params.config.feature_dim();
    let rows = exec.map(features.rows(), |i| {
        let x: Vec<f64> = features.row(i).iter().map(|&v| f64::from(v)).collect();
        extract_embedding(params, &x).map(|e| e.into_iter().map(|v| v as f32).collect::<Vec<f32>>())
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    EmbeddingMatrix::from_rows(dim, &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub identity: usize,
    pub attributes: Vec<usize>,
    pub id_probs: Vec<f64>,
    pub attr_probs: Vec<Vec<f64>>,
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn predict(params: &ModelParams, feature: &[f64]) -> Result<Prediction> {
    let pass = forward(params, feature, Mode::Eval)?;
    let attr_probs: Vec<Vec<f64>> = pass.attr_logits.iter().map(|z| softmax(z)).collect();
    Ok(Prediction {
        identity: argmax(&pass.id_logits),
        attributes: pass.attr_logits.iter().map(|z| argmax(z)).collect(),
        id_probs: softmax(&pass.id_logits),
        attr_probs,
    })
}
