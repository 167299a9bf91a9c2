//! The multi-view bottleneck model: one encoder per view, a fusion network
//! over the concatenated latents, and a classifier, trained on
//!
//! ```text
//! CE(Y, Ŷ) + Σ_i β_i · I(X_i; Z_i)
//! ```
//!
//! Cross-entropy is in nats and each `I(X_i; Z_i)` is in bits; β absorbs the
//! unit conversion. With every β at zero this is the plain classifier
//! baseline, computed through the same code path.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeibError, Result};
use crate::kernel::{estimate_sigma, evaluate_mi, KernelConfig, SigmaMode};
use crate::linalg::DenseMatrix;
use crate::nn::{
    softmax_cross_entropy, Activation, ForwardTrace, Layer, LayerSpec, Mlp, MlpGrads,
    OptimizerKind, OptimizerState,
};

/// Aligned per-view sample matrices plus integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiViewBatch {
    pub views: Vec<DenseMatrix>,
    pub labels: Vec<usize>,
}

impl MultiViewBatch {
    pub fn new(views: Vec<DenseMatrix>, labels: Vec<usize>) -> Result<Self> {
        let batch = Self { views, labels };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(MeibError::dim("a batch needs at least one view"));
        }
        let n = self.labels.len();
        for (i, v) in self.views.iter().enumerate() {
            if v.rows() != n {
                return Err(MeibError::dim(format!(
                    "view {i} has {} rows but there are {n} labels",
                    v.rows()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.cols()).collect()
    }

    /// One more than the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            views: self.views.iter().map(|v| v.select_rows(indices)).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Architecture and regularization settings for a fresh model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub view_dims: Vec<usize>,
    /// Hidden widths per encoder; the last width is that view's latent size.
    pub encoder_layers: Vec<Vec<usize>>,
    pub fusion_layers: Vec<usize>,
    /// Hidden layers of the classifier before the logit layer.
    #[serde(default)]
    pub classifier_hidden: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub activation: Activation,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub kernel: KernelConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeibModel {
    pub encoders: Vec<Mlp>,
    pub fusion: Mlp,
    pub classifier: Mlp,
    pub betas: Vec<f64>,
    pub kernel: KernelConfig,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct JointForward {
    pub encoder_traces: Vec<ForwardTrace>,
    pub fusion_trace: ForwardTrace,
    pub classifier_trace: ForwardTrace,
}

impl JointForward {
    pub fn latent(&self, view: usize) -> &DenseMatrix {
        self.encoder_traces[view].output()
    }

    pub fn joint(&self) -> &DenseMatrix {
        self.fusion_trace.output()
    }

    pub fn logits(&self) -> &DenseMatrix {
        self.classifier_trace.output()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// Nats.
    pub ce: f64,
    /// Bits, one per view.
    pub per_view_mi: Vec<f64>,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub encoders: Vec<MlpGrads>,
    pub fusion: MlpGrads,
    pub classifier: MlpGrads,
}

impl ModelGrads {
    pub fn zeros_like(model: &MeibModel) -> Self {
        Self {
            encoders: model.encoders.iter().map(MlpGrads::zeros_like).collect(),
            fusion: MlpGrads::zeros_like(&model.fusion),
            classifier: MlpGrads::zeros_like(&model.classifier),
        }
    }

    /// Flat views in declaration order: encoders, fusion, classifier.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.encoders.iter().flat_map(|g| g.slices()).collect();
        out.extend(self.fusion.slices());
        out.extend(self.classifier.slices());
        out
    }

    pub fn add_scaled(&mut self, other: &Self, s: f64) -> Result<()> {
        for (a, b) in self.encoders.iter_mut().zip(&other.encoders) {
            a.add_scaled(b, s)?;
        }
        self.fusion.add_scaled(&other.fusion, s)?;
        self.classifier.add_scaled(&other.classifier, s)
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Gradients split by source: the cross-entropy path and one unscaled
/// mutual-information path per view.
#[derive(Clone, Debug)]
pub struct PathGrads {
    pub ce: ModelGrads,
    /// `mi[i]` is `∂I(X_i;Z_i)/∂θ` without β_i; only encoder `i` is nonzero.
    pub mi: Vec<ModelGrads>,
    pub report: LossReport,
}

/// Kernel widths to hold fixed instead of estimating them from the batch.
/// `None` entries are estimated with the model's k-NN heuristic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KernelWidths {
    /// One per view, for the raw-input Gram.
    pub x: Option<Vec<f64>>,
    /// One per view, for the latent Gram.
    pub z: Option<Vec<f64>>,
}

impl KernelWidths {
    pub fn fixed_x(x: Vec<f64>) -> Self {
        Self { x: Some(x), z: None }
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose arg-max logit (lowest index on ties) is wrong.
pub fn classification_error(logits: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(MeibError::dim("logit rows and labels differ"));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let wrong = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax_lowest(logits.row(i)) != y)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

struct LossPieces {
    forward: JointForward,
    report: LossReport,
    d_logits: DenseMatrix,
    /// `∂I_i/∂z_i` for views with β_i ≠ 0 (or all views when forced).
    mi_grads: Vec<Option<DenseMatrix>>,
}

fn finite_or(what: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(MeibError::NonFinite(what.to_string()))
    }
}

impl MeibModel {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let k = spec.view_dims.len();
        if k == 0 {
            return Err(MeibError::dim("model needs at least one view"));
        }
        if spec.encoder_layers.len() != k || spec.betas.len() != k {
            return Err(MeibError::dim(format!(
                "{k} views but {} encoders and {} betas",
                spec.encoder_layers.len(),
                spec.betas.len()
            )));
        }
        if spec.num_classes < 2 {
            return Err(MeibError::param("need at least two classes"));
        }
        let act = spec.activation;
        // Independent streams per sub-network.
        let sub_seed = |i: u64| seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
        let mut encoders = Vec::with_capacity(k);
        for (i, (&dim, widths)) in spec.view_dims.iter().zip(&spec.encoder_layers).enumerate() {
            encoders.push(Mlp::init(dim, &LayerSpec::chain(dim, widths, act), sub_seed(i as u64))?);
        }
        let latent: usize = encoders.iter().map(Mlp::out_dim).sum();
        let fusion = Mlp::init(
            latent,
            &LayerSpec::chain(latent, &spec.fusion_layers, act),
            sub_seed(k as u64),
        )?;
        let mut head = LayerSpec::chain(fusion.out_dim(), &spec.classifier_hidden, act);
        let head_in = head.last().map_or(fusion.out_dim(), |l| l.out_dim);
        head.push(LayerSpec::new(head_in, spec.num_classes, Activation::Identity));
        let classifier = Mlp::init(fusion.out_dim(), &head, sub_seed(k as u64 + 1))?;
        Self::from_parts(encoders, fusion, classifier, spec.betas.clone(), spec.kernel)
    }

    pub fn from_parts(
        encoders: Vec<Mlp>,
        fusion: Mlp,
        classifier: Mlp,
        betas: Vec<f64>,
        kernel: KernelConfig,
    ) -> Result<Self> {
        if encoders.is_empty() || encoders.len() != betas.len() {
            return Err(MeibError::dim(format!(
                "{} encoders but {} betas",
                encoders.len(),
                betas.len()
            )));
        }
        if let Some(b) = betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(MeibError::param(format!("beta must be finite and >= 0, got {b}")));
        }
        let latent: usize = encoders.iter().map(Mlp::out_dim).sum();
        if fusion.in_dim() != latent {
            return Err(MeibError::dim(format!(
                "fusion expects {} inputs but latents total {latent}",
                fusion.in_dim()
            )));
        }
        if classifier.in_dim() != fusion.out_dim() {
            return Err(MeibError::dim("classifier input does not match fusion output"));
        }
        kernel.validate()?;
        Ok(Self {
            encoders,
            fusion,
            classifier,
            betas,
            kernel,
        })
    }

    pub fn num_views(&self) -> usize {
        self.encoders.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.out_dim()
    }

    pub fn view_dims(&self) -> Vec<usize> {
        self.encoders.iter().map(Mlp::in_dim).collect()
    }

    pub fn latent_dims(&self) -> Vec<usize> {
        self.encoders.iter().map(Mlp::out_dim).collect()
    }

    pub fn with_betas(mut self, betas: Vec<f64>) -> Result<Self> {
        if betas.len() != self.encoders.len() {
            return Err(MeibError::dim("beta count must equal view count"));
        }
        self.betas = betas;
        Self::from_parts(self.encoders, self.fusion, self.classifier, self.betas, self.kernel)
    }

    fn check_views(&self, views: &[DenseMatrix]) -> Result<()> {
        if views.len() != self.encoders.len() {
            return Err(MeibError::dim(format!(
                "model has {} views, batch has {}",
                self.encoders.len(),
                views.len()
            )));
        }
        Ok(())
    }

    pub fn forward_joint(&self, views: &[DenseMatrix]) -> Result<JointForward> {
        self.check_views(views)?;
        let encoder_traces = self
            .encoders
            .iter()
            .zip(views)
            .map(|(enc, x)| enc.forward(x))
            .collect::<Result<Vec<_>>>()?;
        let latents: Vec<&DenseMatrix> = encoder_traces.iter().map(|t| t.output()).collect();
        let concat = DenseMatrix::hconcat(&latents)?;
        let fusion_trace = self.fusion.forward(&concat)?;
        let classifier_trace = self.classifier.forward(fusion_trace.output())?;
        Ok(JointForward {
            encoder_traces,
            fusion_trace,
            classifier_trace,
        })
    }

    pub fn logits(&self, views: &[DenseMatrix]) -> Result<DenseMatrix> {
        Ok(self.forward_joint(views)?.classifier_trace.into_output())
    }

    fn loss_pieces(
        &self,
        batch: &MultiViewBatch,
        widths: &KernelWidths,
        all_mi_grads: bool,
    ) -> Result<LossPieces> {
        batch.validate()?;
        if batch.len() < 2 {
            return Err(MeibError::InsufficientSamples {
                needed: 2,
                got: batch.len(),
            });
        }
        for s in [&widths.x, &widths.z].into_iter().flatten() {
            if s.len() != self.num_views() {
                return Err(MeibError::dim("fixed kernel widths need one value per view"));
            }
        }
        let forward = self.forward_joint(&batch.views)?;
        let (ce, d_logits) = softmax_cross_entropy(forward.logits(), &batch.labels)?;
        finite_or("cross-entropy", ce)?;
        let accuracy = 1.0 - classification_error(forward.logits(), &batch.labels)?;

        let kc = &self.kernel;
        let mut per_view_mi = Vec::with_capacity(self.num_views());
        let mut mi_grads = Vec::with_capacity(self.num_views());
        for (i, x) in batch.views.iter().enumerate() {
            let z = forward.latent(i);
            z.ensure_finite("latent representation")?;
            let sx = match &widths.x {
                Some(s) => s[i],
                None => estimate_sigma(x, kc.k_nn, kc.sigma_floor)?,
            };
            let sz = match &widths.z {
                Some(s) => s[i],
                None => estimate_sigma(z, kc.k_nn, kc.sigma_floor)?,
            };
            let want_grad = all_mi_grads || self.betas[i] != 0.0;
            let eval = evaluate_mi(x, z, sx, sz, kc.alpha, want_grad)?;
            per_view_mi.push(finite_or("mutual information", eval.mi)?);
            mi_grads.push(eval.gradient.map(|g| g.d_input));
        }
        let total = ce + self
            .betas
            .iter()
            .zip(&per_view_mi)
            .map(|(b, mi)| b * mi)
            .sum::<f64>();
        Ok(LossPieces {
            forward,
            report: LossReport {
                total,
                ce,
                per_view_mi,
                accuracy,
            },
            d_logits,
            mi_grads,
        })
    }

    /// Backpropagates `∂L/∂logits` down to each latent; returns classifier
    /// and fusion gradients plus the per-view latent gradients.
    fn head_backward(
        &self,
        forward: &JointForward,
        d_logits: &DenseMatrix,
    ) -> Result<(MlpGrads, MlpGrads, Vec<DenseMatrix>)> {
        let (classifier, dz) = self.classifier.backward(&forward.classifier_trace, d_logits)?;
        let (fusion, d_concat) = self.fusion.backward(&forward.fusion_trace, &dz)?;
        let d_latents = d_concat.hsplit(&self.latent_dims())?;
        Ok((classifier, fusion, d_latents))
    }

    /// Kernel widths the loss would estimate for this batch.
    pub fn kernel_widths(&self, batch: &MultiViewBatch) -> Result<KernelWidths> {
        let forward = self.forward_joint(&batch.views)?;
        let kc = &self.kernel;
        let mut x = Vec::new();
        let mut z = Vec::new();
        for (i, v) in batch.views.iter().enumerate() {
            x.push(estimate_sigma(v, kc.k_nn, kc.sigma_floor)?);
            z.push(estimate_sigma(forward.latent(i), kc.k_nn, kc.sigma_floor)?);
        }
        Ok(KernelWidths {
            x: Some(x),
            z: Some(z),
        })
    }

    /// Loss and total parameter gradient for one mini-batch. Kernel widths
    /// not pinned in `widths` are estimated and treated as constants.
    pub fn loss_and_grads(
        &self,
        batch: &MultiViewBatch,
        widths: &KernelWidths,
    ) -> Result<(LossReport, ModelGrads)> {
        let pieces = self.loss_pieces(batch, widths, false)?;
        let (classifier, fusion, d_latents) = self.head_backward(&pieces.forward, &pieces.d_logits)?;
        let mut encoders = Vec::with_capacity(self.num_views());
        for (i, mut upstream) in d_latents.into_iter().enumerate() {
            if let Some(g) = &pieces.mi_grads[i] {
                upstream.add_scaled_in_place(g, self.betas[i])?;
            }
            let (grads, _) = self.encoders[i].backward(&pieces.forward.encoder_traces[i], &upstream)?;
            encoders.push(grads);
        }
        let grads = ModelGrads {
            encoders,
            fusion,
            classifier,
        };
        if !grads.is_finite() {
            return Err(MeibError::NonFinite(format!(
                "parameter gradients (ce = {}, mi = {:?})",
                pieces.report.ce, pieces.report.per_view_mi
            )));
        }
        Ok((pieces.report, grads))
    }

    /// The same gradient split into its cross-entropy and per-view
    /// information paths.
    pub fn path_grads(&self, batch: &MultiViewBatch, widths: &KernelWidths) -> Result<PathGrads> {
        let pieces = self.loss_pieces(batch, widths, true)?;
        let (classifier, fusion, d_latents) = self.head_backward(&pieces.forward, &pieces.d_logits)?;
        let mut ce_encoders = Vec::with_capacity(self.num_views());
        let mut mi = Vec::with_capacity(self.num_views());
        for (i, upstream) in d_latents.iter().enumerate() {
            let trace = &pieces.forward.encoder_traces[i];
            ce_encoders.push(self.encoders[i].backward(trace, upstream)?.0);
            let d_mi = pieces.mi_grads[i].as_ref().expect("all gradients requested");
            let mut g = ModelGrads::zeros_like(self);
            g.encoders[i] = self.encoders[i].backward(trace, d_mi)?.0;
            mi.push(g);
        }
        Ok(PathGrads {
            ce: ModelGrads {
                encoders: ce_encoders,
                fusion,
                classifier,
            },
            mi,
            report: pieces.report,
        })
    }

    /// Loss only.
    pub fn loss(&self, batch: &MultiViewBatch, widths: &KernelWidths) -> Result<LossReport> {
        Ok(self.loss_pieces(batch, widths, false)?.report)
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self
            .encoders
            .iter_mut()
            .flat_map(|e| e.param_slices_mut())
            .collect();
        out.extend(self.fusion.param_slices_mut());
        out.extend(self.classifier.param_slices_mut());
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.encoders.iter().flat_map(|e| e.param_slices()).collect();
        out.extend(self.fusion.param_slices());
        out.extend(self.classifier.param_slices());
        out
    }

    /// Classification error on a dataset.
    pub fn evaluate(&self, batch: &MultiViewBatch) -> Result<f64> {
        batch.validate()?;
        let logits = self.logits(&batch.views)?;
        classification_error(&logits, &batch.labels)
    }

    /// ℓ₂ norm of every input column of each encoder's first weight matrix.
    pub fn input_weight_norms(&self) -> Vec<Vec<f64>> {
        self.encoders
            .iter()
            .map(|e| match e.layers().first() {
                Some(l) => l.weight.column_norms(),
                None => vec![0.0; e.in_dim()],
            })
            .collect()
    }

    /// Mean per-view `I(X_i; Z_i)` over consecutive chunks of `chunk` rows;
    /// a trailing chunk with fewer than two rows is skipped.
    pub fn view_information(&self, batch: &MultiViewBatch, chunk: usize) -> Result<Vec<f64>> {
        batch.validate()?;
        let chunk = chunk.max(2);
        let mut sums = vec![0.0; self.num_views()];
        let mut count = 0usize;
        let indices: Vec<usize> = (0..batch.len()).collect();
        for part in indices.chunks(chunk) {
            if part.len() < 2 {
                continue;
            }
            let sub = batch.select(part);
            let forward = self.forward_joint(&sub.views)?;
            for (i, x) in sub.views.iter().enumerate() {
                let z = forward.latent(i);
                let kc = &self.kernel;
                let sx = estimate_sigma(x, kc.k_nn, kc.sigma_floor)?;
                let sz = estimate_sigma(z, kc.k_nn, kc.sigma_floor)?;
                sums[i] += evaluate_mi(x, z, sx, sz, kc.alpha, false)?.mi;
            }
            count += 1;
        }
        if count == 0 {
            return Err(MeibError::InsufficientSamples {
                needed: 2,
                got: batch.len(),
            });
        }
        Ok(sums.into_iter().map(|s| s / count as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a new best mean training loss;
    /// 0 disables early stopping.
    pub patience: usize,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 100,
            epochs: 100,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Means over the epoch's mini-batches.
    pub loss: LossReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochReport>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<&LossReport> {
        self.epochs.last().map(|e| &e.loss)
    }
}

/// Mini-batch training; deterministic for a fixed model, dataset and config.
pub fn train(model: &mut MeibModel, data: &MultiViewBatch, cfg: &TrainConfig) -> Result<TrainHistory> {
    data.validate()?;
    if data.is_empty() {
        return Err(MeibError::Empty("training set".into()));
    }
    if data.len() < 2 {
        return Err(MeibError::InsufficientSamples {
            needed: 2,
            got: data.len(),
        });
    }
    if cfg.batch_size < 2 {
        return Err(MeibError::param("batch size must be at least 2"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(MeibError::param("learning rate must be positive"));
    }
    let kc = model.kernel;
    let widths = match kc.sigma_mode {
        SigmaMode::PerBatch => KernelWidths::default(),
        SigmaMode::PerDataset => KernelWidths::fixed_x(
            data.views
                .iter()
                .map(|v| estimate_sigma(v, kc.k_nn, kc.sigma_floor))
                .collect::<Result<_>>()?,
        ),
    };
    let mut optimizer = OptimizerState::new(cfg.optimizer, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossReport {
            per_view_mi: vec![0.0; model.num_views()],
            ..Default::default()
        };
        let mut batches = 0usize;
        for part in order.chunks(cfg.batch_size) {
            if part.len() < 2 {
                continue;
            }
            let batch = data.select(part);
            let (report, grads) = model.loss_and_grads(&batch, &widths)?;
            optimizer.step(&mut model.param_slices_mut(), &grads.slices())?;
            sum.total += report.total;
            sum.ce += report.ce;
            sum.accuracy += report.accuracy;
            sum.per_view_mi
                .iter_mut()
                .zip(&report.per_view_mi)
                .for_each(|(s, v)| *s += v);
            batches += 1;
        }
        let scale = 1.0 / batches.max(1) as f64;
        let mean = LossReport {
            total: sum.total * scale,
            ce: sum.ce * scale,
            per_view_mi: sum.per_view_mi.iter().map(|v| v * scale).collect(),
            accuracy: sum.accuracy * scale,
        };
        let total = mean.total;
        history.epochs.push(EpochReport { epoch, loss: mean });
        if total < best {
            best = total;
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok(history)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MEIBCKPT";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    view_dims: Vec<usize>,
    encoders: Vec<Vec<LayerSpec>>,
    fusion_in: usize,
    fusion: Vec<LayerSpec>,
    classifier: Vec<LayerSpec>,
    betas: Vec<f64>,
    kernel: KernelConfig,
}

impl MeibModel {
    /// Binary checkpoint: magic `MEIBCKPT`, `u32` version, `u64` header
    /// length, a JSON header (view dims, layer specs, betas, kernel config),
    /// then every parameter as little-endian `f64` in declaration order
    /// (encoders, fusion, classifier; weight then bias per layer).
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        let header = CheckpointHeader {
            view_dims: self.view_dims(),
            encoders: self.encoders.iter().map(Mlp::specs).collect(),
            fusion_in: self.fusion.in_dim(),
            fusion: self.fusion.specs(),
            classifier: self.classifier.specs(),
            betas: self.betas.clone(),
            kernel: self.kernel,
        };
        let json = serde_json::to_vec(&header)
            .map_err(|e| MeibError::Checkpoint(format!("header encoding: {e}")))?;
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for slice in self.param_slices() {
            for v in slice {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(MeibError::Checkpoint("not a model checkpoint".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(MeibError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(MeibError::Checkpoint("header is implausibly large".into()));
        }
        let mut json = vec![0u8; len];
        input.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)
            .map_err(|e| MeibError::Checkpoint(format!("header decoding: {e}")))?;
        if header.view_dims.len() != header.encoders.len() {
            return Err(MeibError::Checkpoint("view and encoder counts differ".into()));
        }

        let mut read_mlp = |in_dim: usize, specs: &[LayerSpec]| -> Result<Mlp> {
            let mut layers = Vec::with_capacity(specs.len());
            for spec in specs {
                let weight = read_f64s(&mut input, spec.in_dim * spec.out_dim)?;
                let bias = read_f64s(&mut input, spec.out_dim)?;
                layers.push(Layer {
                    spec: *spec,
                    weight: DenseMatrix::new(spec.out_dim, spec.in_dim, weight)?,
                    bias,
                });
            }
            Mlp::from_layers(in_dim, layers)
        };
        let mut encoders = Vec::with_capacity(header.encoders.len());
        for (&dim, specs) in header.view_dims.iter().zip(&header.encoders) {
            encoders.push(read_mlp(dim, specs)?);
        }
        let fusion = read_mlp(header.fusion_in, &header.fusion)?;
        let classifier = read_mlp(fusion.out_dim(), &header.classifier)?;
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(MeibError::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Self::from_parts(encoders, fusion, classifier, header.betas, header.kernel)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}

fn read_f64s<R: Read>(input: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    input
        .read_exact(&mut buf)
        .map_err(|_| MeibError::Checkpoint("parameter data is truncated".into()))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec(betas: Vec<f64>) -> ModelSpec {
        ModelSpec {
            view_dims: vec![3, 2],
            encoder_layers: vec![vec![4, 3], vec![2]],
            fusion_layers: vec![4],
            classifier_hidden: vec![],
            num_classes: 3,
            activation: Activation::Tanh,
            betas,
            kernel: KernelConfig::default(),
        }
    }

    #[test]
    fn shapes_follow_spec() {
        let spec = ModelSpec {
            view_dims: vec![25, 25],
            encoder_layers: vec![vec![64], vec![64]],
            fusion_layers: vec![256],
            classifier_hidden: vec![],
            num_classes: 2,
            activation: Activation::Relu,
            betas: vec![0.0, 0.0],
            kernel: KernelConfig::default(),
        };
        let model = MeibModel::new(&spec, 0).unwrap();
        let views = vec![DenseMatrix::zeros(7, 25), DenseMatrix::zeros(7, 25)];
        let fwd = model.forward_joint(&views).unwrap();
        assert_eq!(fwd.latent(0).shape(), (7, 64));
        assert_eq!(fwd.joint().shape(), (7, 256));
        assert_eq!(fwd.logits().shape(), (7, 2));
        assert_eq!(model.fusion.in_dim(), 128);
    }

    #[test]
    fn construction_errors() {
        let mut spec = tiny_spec(vec![0.0]);
        assert!(MeibModel::new(&spec, 0).is_err());
        spec.betas = vec![-1.0, 0.0];
        assert!(MeibModel::new(&spec, 0).is_err());
        spec.betas = vec![0.0, 0.0];
        spec.num_classes = 1;
        assert!(MeibModel::new(&spec, 0).is_err());
    }

    #[test]
    fn error_metric() {
        let labels = [0, 1, 1, 0];
        let perfect = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(classification_error(&perfect, &labels).unwrap(), 0.0);
        let inverted = perfect.map(|v| 1.0 - v);
        assert_eq!(classification_error(&inverted, &labels).unwrap(), 1.0);
        // Ties go to class 0.
        let tied = DenseMatrix::zeros(4, 2);
        assert_eq!(classification_error(&tied, &labels).unwrap(), 0.5);
    }

    #[test]
    fn weight_norm_examples() {
        let mut model = MeibModel::new(&tiny_spec(vec![0.0, 0.0]), 1).unwrap();
        let w = &mut model.encoders[1].layers_mut()[0].weight;
        *w = DenseMatrix::identity(2);
        let first = &mut model.encoders[0].layers_mut()[0].weight;
        first.data_mut().iter_mut().for_each(|v| *v = 0.0);
        let norms = model.input_weight_norms();
        assert_eq!(norms[0], vec![0.0; 3]);
        assert_eq!(norms[1], vec![1.0, 1.0]);
    }

    #[test]
    fn loss_needs_two_samples() {
        let model = MeibModel::new(&tiny_spec(vec![0.1, 0.1]), 0).unwrap();
        let batch =
            MultiViewBatch::new(vec![DenseMatrix::zeros(1, 3), DenseMatrix::zeros(1, 2)], vec![0]).unwrap();
        assert!(matches!(
            model.loss(&batch, &KernelWidths::default()),
            Err(MeibError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn batch_validation() {
        assert!(MultiViewBatch::new(vec![DenseMatrix::zeros(3, 2)], vec![0, 1]).is_err());
        assert!(MultiViewBatch::new(vec![], vec![]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = MeibModel::new(&tiny_spec(vec![0.01, 0.2]), 42).unwrap();
        let mut bytes = Vec::new();
        model.write_checkpoint(&mut bytes).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = MeibModel::read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, model);

        let mut truncated = bytes.clone();
        truncated.truncate(bytes.len() - 3);
        assert!(MeibModel::read_checkpoint(truncated.as_slice()).is_err());
        let mut bad_version = bytes.clone();
        bad_version[8] = 9;
        assert!(MeibModel::read_checkpoint(bad_version.as_slice()).is_err());
        assert!(MeibModel::read_checkpoint(&b"NOTACKPT"[..]).is_err());
    }

    #[test]
    fn train_rejects_empty() {
        let mut model = MeibModel::new(&tiny_spec(vec![0.0, 0.0]), 0).unwrap();
        let empty = MultiViewBatch {
            views: vec![DenseMatrix::zeros(0, 3), DenseMatrix::zeros(0, 2)],
            labels: vec![],
        };
        assert!(matches!(
            train(&mut model, &empty, &TrainConfig::default()),
            Err(MeibError::Empty(_))
        ));
    }
}
