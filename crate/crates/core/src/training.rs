//! Two-stage optimisation: triplet pretraining of the action encoder, then
//! joint alignment + classification training of the whole model.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{
    flip_action, flip_interaction, jitter, skeleton_aware_cutout, standard_cutout, CutoutConfig,
    JitterConfig, ProtectedRegionSpec,
};
use crate::checkpoint::{Checkpoint, CheckpointMeta};
use crate::data::{
    split_interaction_crop, ActionClass, ActionRecord, ActionSample, Dataset, DatasetManifest,
    InteractionClass, InteractionSample, Split, NUM_CLASSES,
};
use crate::encoders::{CattleActModel, EncoderConfig, Normalization};
use crate::error::{Error, Result};
use crate::evaluation::{metrics_from_predictions, predict_interactions};
use crate::image::Image;
use crate::losses::{
    infonce_alignment_loss_with_grad, ldam_loss_with_grad, ldam_margins, triplet_loss_with_grad,
    zero_mean_reg_with_grad, AlignmentBatch, LossWeights,
};
use crate::nn::{Adam, Graph, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoutMode {
    #[default]
    SkeletonAware,
    Standard,
    None,
}

/// Per-sample augmentation applied while training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub cutout_mode: CutoutMode,
    pub cutout_probability: f64,
    /// `seed` and `fill` are overwritten per draw and by the dataset mean.
    pub cutout: CutoutConfig,
    pub flip_probability: f64,
    pub jitter: Option<JitterConfig>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            cutout_mode: CutoutMode::SkeletonAware,
            cutout_probability: 0.5,
            cutout: CutoutConfig::default(),
            flip_probability: 0.5,
            jitter: Some(JitterConfig::default()),
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("cutout_probability", self.cutout_probability), ("flip_probability", self.flip_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        self.cutout.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Triplets per step.
    pub batch_size: usize,
    pub alpha: f64,
    pub zero_mean_weight: f64,
    pub seed: u64,
    /// Triplets drawn per epoch; defaults to the number of training crops.
    pub triplets_per_epoch: Option<usize>,
    pub encoder: EncoderConfig,
    pub augment: AugmentConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-5,
            batch_size: 16,
            alpha: 0.5,
            zero_mean_weight: 0.01,
            seed: 0,
            triplets_per_epoch: None,
            encoder: EncoderConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.triplets_per_epoch == Some(0) {
            return Err(Error::InvalidConfig("epochs, batch_size and triplets_per_epoch must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.alpha > 0.0) || !(self.zero_mean_weight >= 0.0) {
            return Err(Error::InvalidConfig("learning_rate and alpha must be > 0, zero_mean_weight >= 0".into()));
        }
        self.encoder.validate()?;
        self.augment.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub freeze_action_encoder: bool,
    pub seed: u64,
    /// Drop the alignment term entirely.
    pub no_alignment: bool,
    /// Allow training without an action checkpoint (random action encoder).
    pub from_scratch: bool,
    /// Used when training from scratch; otherwise must match the checkpoint.
    pub encoder: EncoderConfig,
    pub augment: AugmentConfig,
}

impl Default for JointTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 1e-5,
            batch_size: 16,
            weights: LossWeights::default(),
            freeze_action_encoder: false,
            seed: 0,
            no_alignment: false,
            from_scratch: false,
            encoder: EncoderConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

impl JointTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        self.weights.validate()?;
        self.encoder.validate()?;
        self.augment.validate()
    }
}

/// Per-channel mean and standard deviation over every image of `split`.
pub fn channel_stats(dataset: &Dataset, split: Split) -> Normalization {
    let mut paths: BTreeSet<&str> = BTreeSet::new();
    for r in dataset.manifest.records.iter().filter(|r| r.split() == split) {
        paths.insert(r.image());
    }
    let (mut sum, mut sq, mut n) = ([0.0f64; 3], [0.0f64; 3], 0usize);
    for p in paths {
        let img = dataset.image(p).expect("dataset holds every image");
        for px in img.data().chunks_exact(3) {
            for c in 0..3 {
                sum[c] += px[c] as f64;
                sq[c] += (px[c] as f64).powi(2);
            }
        }
        n += img.height() * img.width();
    }
    if n == 0 {
        return Normalization::default();
    }
    let mean = sum.map(|s| s / n as f64);
    let std: Vec<f64> = (0..3).map(|c| (sq[c] / n as f64 - mean[c] * mean[c]).max(0.0).sqrt().max(1e-3)).collect();
    Normalization {
        mean: mean.map(|m| m as f32),
        std: [std[0] as f32, std[1] as f32, std[2] as f32],
    }
}

/// Records drawn for one triplet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet<'a> {
    pub anchor: &'a ActionRecord,
    pub positive: &'a ActionRecord,
    pub negative: &'a ActionRecord,
}

/// Draws `count` triplets uniformly from all valid
/// `(anchor, positive, negative)` combinations of the split's action crops.
pub fn sample_triplets(manifest: &DatasetManifest, split: Split, count: usize, seed: u64) -> Result<Vec<Triplet<'_>>> {
    let records: Vec<&ActionRecord> = manifest.actions().filter(|r| r.split == split).collect();
    let mut by_class: Vec<Vec<&ActionRecord>> = vec![Vec::new(); NUM_CLASSES];
    for r in &records {
        by_class[r.label.index()].push(r);
    }
    let n = records.len();
    let present = by_class.iter().filter(|c| !c.is_empty()).count();
    // an anchor of class c admits (n_c - 1)(n - n_c) triplets
    let weights: Vec<f64> = records
        .iter()
        .map(|r| {
            let nc = by_class[r.label.index()].len();
            ((nc - 1) * (n - nc)) as f64
        })
        .collect();
    if present < 2 || weights.iter().all(|w| *w == 0.0) {
        return Err(Error::InsufficientClassDiversity(format!(
            "{present} action classes present in the {:?} split; need >= 2 with one class holding >= 2 crops",
            split
        )));
    }
    let anchors = WeightedIndex::new(&weights).expect("positive total weight");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor = records[anchors.sample(&mut rng)];
        let same = &by_class[anchor.label.index()];
        let positive = loop {
            let p = same[rng.random_range(0..same.len())];
            if !std::ptr::eq(p, anchor) {
                break p;
            }
        };
        let others = n - same.len();
        let mut k = rng.random_range(0..others);
        let negative = records
            .iter()
            .filter(|r| r.label != anchor.label)
            .find(|_| {
                let hit = k == 0;
                k = k.wrapping_sub(1);
                hit
            })
            .expect("k < others");
        out.push(Triplet {
            anchor,
            positive,
            negative,
        });
    }
    Ok(out)
}

fn augment_action(s: &ActionSample, cfg: &AugmentConfig, fill: [f32; 3], rng: &mut ChaCha8Rng) -> Image {
    let s = if rng.random::<f64>() < cfg.flip_probability {
        flip_action(s)
    } else {
        s.clone()
    };
    let mut image = s.image;
    if cfg.cutout_mode != CutoutMode::None && rng.random::<f64>() < cfg.cutout_probability {
        let cut = CutoutConfig {
            seed: rng.random(),
            fill,
            ..cfg.cutout.clone()
        };
        image = match cfg.cutout_mode {
            CutoutMode::SkeletonAware => {
                skeleton_aware_cutout(&image, &[&s.skeleton], &ProtectedRegionSpec::action(), &cut).image
            }
            _ => standard_cutout(&image, &cut).image,
        };
    }
    if let Some(j) = &cfg.jitter {
        image = jitter(&image, j, rng);
    }
    image
}

/// Flip, cutout on the union image (protecting both skeletons) and jitter.
pub fn augment_interaction(
    s: &InteractionSample,
    cfg: &AugmentConfig,
    fill: [f32; 3],
    rng: &mut ChaCha8Rng,
) -> InteractionSample {
    let mut s = if rng.random::<f64>() < cfg.flip_probability {
        flip_interaction(s)
    } else {
        s.clone()
    };
    if cfg.cutout_mode != CutoutMode::None && rng.random::<f64>() < cfg.cutout_probability {
        let cut = CutoutConfig {
            seed: rng.random(),
            fill,
            ..cfg.cutout.clone()
        };
        s.union_image = match cfg.cutout_mode {
            CutoutMode::SkeletonAware => skeleton_aware_cutout(
                &s.union_image,
                &[&s.member_a.skeleton, &s.member_b.skeleton],
                &ProtectedRegionSpec::interaction(),
                &cut,
            )
            .image,
            _ => standard_cutout(&s.union_image, &cut).image,
        };
    }
    if let Some(j) = &cfg.jitter {
        s.union_image = jitter(&s.union_image, j, rng);
    }
    s
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn check_finite(value: f64, step: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { step })
    }
}

/// Mean cross-entropy of the action probe on detached embeddings; only
/// `head.act` receives gradient.
fn action_probe(model: &CattleActModel, g: &mut Graph, z: Tensor, labels: &[Option<ActionClass>]) -> Result<Option<Tensor>> {
    let labelled: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_some()).collect();
    if labelled.is_empty() {
        return Ok(None);
    }
    let z = g.detach(z);
    let z = g.gather_rows(z, &labelled);
    let p = model.action_head(g, z);
    let logits = g.value(p).clone();
    let n = labelled.len() as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros(logits.dim());
    for (row, &i) in labelled.iter().enumerate() {
        let y = labels[i].expect("filtered").index();
        let (v, gr) = ldam_loss_with_grad(&logits.row(row).to_vec(), y, &[0.0; NUM_CLASSES])?;
        total += v / n;
        for (c, x) in gr.into_iter().enumerate() {
            grad[(row, c)] = x / n;
        }
    }
    Ok(Some(g.custom_scalar(total, vec![(p, grad)])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainStepLog {
    pub step: usize,
    pub epoch: usize,
    pub loss_triplet: f64,
    pub loss_zero_mean: f64,
    pub loss_total: f64,
    /// Norm of the batch-mean embedding.
    pub mean_norm: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<PretrainStepLog>,
    pub epoch_mean_triplet: Vec<f64>,
    pub trained_ids: BTreeSet<String>,
}

/// Triplet + zero-mean training of the action encoder on the training split.
/// The action head is fitted alongside as a probe on detached embeddings.
pub fn pretrain_action_encoder(dataset: &Dataset, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let manifest = &dataset.manifest;
    let n_train = manifest.actions().filter(|r| r.split == Split::Train).count();
    let per_epoch = cfg.triplets_per_epoch.unwrap_or(n_train).max(1);
    // fail before any work if the split cannot supply triplets
    sample_triplets(manifest, Split::Train, 1, cfg.seed)?;

    let norm = channel_stats(dataset, Split::Train);
    let fill = dataset.channel_mean(Split::Train);
    let mut model = CattleActModel::new(cfg.encoder.clone(), norm)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7072_6574_7261_696e);
    let mut log = Vec::new();
    let mut epoch_mean = Vec::with_capacity(cfg.epochs);
    let mut trained_ids = BTreeSet::new();
    let mut step = 0usize;
    let trainable = |n: &str| n.starts_with("act.") || n.starts_with("head.act");

    for epoch in 0..cfg.epochs {
        let triplets = sample_triplets(manifest, Split::Train, per_epoch, rng.random())?;
        let mut epoch_sum = 0.0;
        for chunk in triplets.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut samples = Vec::with_capacity(3 * b);
            for role in 0..3 {
                for t in chunk {
                    let r = [t.anchor, t.positive, t.negative][role];
                    trained_ids.insert(r.id.clone());
                    samples.push(dataset.action_sample(r));
                }
            }
            let images: Vec<Image> = samples.iter().map(|s| augment_action(s, &cfg.augment, fill, &mut rng)).collect();
            let mut g = Graph::new();
            let z = model.action_forward(&mut g, model.action_input(&images.iter().collect::<Vec<_>>())?, 3 * b);
            let zv = rows_of(g.value(z));

            let mut grad = Array2::zeros((3 * b, model.d()));
            let mut trip = 0.0;
            for i in 0..b {
                let (v, [ga, gp, gn]) = triplet_loss_with_grad(&zv[i], &zv[b + i], &zv[2 * b + i], cfg.alpha)?;
                trip += v / b as f64;
                for (row, gr) in [(i, ga), (b + i, gp), (2 * b + i, gn)] {
                    for (c, x) in gr.into_iter().enumerate() {
                        grad[(row, c)] += x / b as f64;
                    }
                }
            }
            let refs: Vec<&[f64]> = zv.iter().map(|r| r.as_slice()).collect();
            let (zm, zm_grad) = zero_mean_reg_with_grad(&refs)?;
            for (row, gr) in zm_grad.into_iter().enumerate() {
                for (c, x) in gr.into_iter().enumerate() {
                    grad[(row, c)] += cfg.zero_mean_weight * x;
                }
            }
            let total = trip + cfg.zero_mean_weight * zm;
            check_finite(total, step)?;
            let mut loss = g.custom_scalar(total, vec![(z, grad)]);
            let labels: Vec<Option<ActionClass>> = samples.iter().map(|s| s.label).collect();
            if let Some(probe) = action_probe(&model, &mut g, z, &labels)? {
                check_finite(g.scalar(probe), step)?;
                loss = g.add(loss, probe);
            }
            let grads = g.backward(loss, &model.params);
            adam.step(&mut model.params, &grads, trainable);

            log.push(PretrainStepLog {
                step,
                epoch,
                loss_triplet: trip,
                loss_zero_mean: zm,
                loss_total: total,
                mean_norm: zm.sqrt(),
            });
            epoch_sum += trip * b as f64;
            step += 1;
        }
        let mean = epoch_sum / per_epoch as f64;
        log::info!("pretrain epoch {epoch}: mean triplet loss {mean:.4}");
        epoch_mean.push(mean);
    }

    let meta = CheckpointMeta {
        stage: "pretrain".into(),
        step: step as u64,
        train_config: serde_json::to_value(cfg)?,
        metrics: serde_json::json!({
            "first_epoch_mean_triplet": epoch_mean.first(),
            "final_epoch_mean_triplet": epoch_mean.last(),
        }),
    };
    Ok(PretrainOutcome {
        checkpoint: Checkpoint::new(model, meta),
        log,
        epoch_mean_triplet: epoch_mean,
        trained_ids,
    })
}

/// Anchor index and negative indices for each labelled interaction in a batch.
pub fn alignment_plan(labels: &[InteractionClass]) -> Vec<(usize, Vec<usize>)> {
    let negatives: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == InteractionClass::NoInteraction)
        .collect();
    if negatives.is_empty() {
        return Vec::new();
    }
    (0..labels.len())
        .filter(|&i| labels[i] != InteractionClass::NoInteraction)
        .map(|i| (i, negatives.clone()))
        .collect()
}

/// One [`AlignmentBatch`] per labelled interaction: positives are its two
/// member embeddings, negatives the batch's `no_interaction` embeddings.
/// Empty when the batch lacks either kind.
pub fn build_alignment_batch(
    labels: &[InteractionClass],
    z_int: &[Vec<f64>],
    z_act_a: &[Vec<f64>],
    z_act_b: &[Vec<f64>],
) -> Vec<AlignmentBatch> {
    alignment_plan(labels)
        .into_iter()
        .map(|(i, negs)| AlignmentBatch {
            z_int: z_int[i].clone(),
            z_act_pos: vec![z_act_a[i].clone(), z_act_b[i].clone()],
            z_int_negs: negs.iter().map(|&j| z_int[j].clone()).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointStepLog {
    pub step: usize,
    pub loss_total: f64,
    pub loss_aln: f64,
    pub loss_cls: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone)]
pub struct JointOutcome {
    pub final_checkpoint: Checkpoint,
    pub best_checkpoint: Checkpoint,
    pub log: Vec<JointStepLog>,
    /// Validation macro-F1 before training, then after each epoch.
    pub val_macro_f1: Vec<f64>,
    pub best_epoch: usize,
    pub trained_ids: BTreeSet<String>,
    /// Steps where the alignment term was skipped for lack of anchors or negatives.
    pub alignment_skipped: usize,
}

fn same_encoder(a: &EncoderConfig, b: &EncoderConfig) -> bool {
    let mut a = a.clone();
    a.seed = b.seed;
    a == *b
}

fn val_macro_f1(model: &CattleActModel, dataset: &Dataset) -> Result<Option<f64>> {
    if dataset.manifest.interactions().all(|r| r.split != Split::Val) {
        return Ok(None);
    }
    let rows = predict_interactions(model, dataset, Split::Val)?;
    Ok(Some(metrics_from_predictions(&rows)?.1.macro_f1))
}

/// Joint optimisation of `λ₁·L_aln + λ₂·L_cls` over the training pairs,
/// keeping the model with the best validation macro-F1.
pub fn train_joint(dataset: &Dataset, action_checkpoint: Option<&Checkpoint>, cfg: &JointTrainConfig) -> Result<JointOutcome> {
    cfg.validate()?;
    let mut model = match (action_checkpoint, cfg.from_scratch) {
        (_, true) => CattleActModel::new(cfg.encoder.clone(), channel_stats(dataset, Split::Train))?,
        (None, false) => {
            return Err(Error::StageOrder(
                "joint training needs an action checkpoint from pretraining (or an explicit from-scratch override)".into(),
            ))
        }
        (Some(ck), false) => {
            if !same_encoder(&ck.model.config, &cfg.encoder) {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint encoder config {} differs from the joint config {}",
                    serde_json::to_string(&ck.model.config)?,
                    serde_json::to_string(&cfg.encoder)?
                )));
            }
            let mut m = CattleActModel::new(cfg.encoder.clone(), ck.model.normalization)?;
            m.load_action_encoder(&ck.model)?;
            // the probe head travels with the encoder it was fitted on
            for name in ["head.act_w", "head.act_b"] {
                let src = ck.model.params.find(name).expect("layout");
                let dst = m.params.find(name).expect("layout");
                m.params.set(dst, ck.model.params.value(src).clone());
            }
            m
        }
    };

    let train: Vec<InteractionSample> = dataset.interaction_samples(Split::Train);
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let counts = dataset.manifest.counts_for(Split::Train).interaction;
    let margins = ldam_margins(&counts.map(|c| c.max(1)), cfg.weights.ldam_margin_scale)?;
    let fill = dataset.channel_mean(Split::Train);
    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a6f_696e_7400_0000);
    let freeze = cfg.freeze_action_encoder;
    let trainable = |n: &str| !(freeze && n.starts_with("act."));

    let mut val_hist = Vec::with_capacity(cfg.epochs + 1);
    let start = val_macro_f1(&model, dataset)?;
    val_hist.extend(start);
    let mut best = (start.unwrap_or(f64::NEG_INFINITY), 0usize, model.clone());
    let mut log = Vec::with_capacity(total_steps);
    let mut trained_ids = BTreeSet::new();
    let mut skipped = 0usize;
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut batch = Vec::with_capacity(b);
            let mut crops = Vec::with_capacity(2 * b);
            let mut member_b = Vec::with_capacity(b);
            for &i in chunk {
                trained_ids.insert(train[i].id.clone());
                let s = augment_interaction(&train[i], &cfg.augment, fill, &mut rng);
                let (ca, cb) = split_interaction_crop(&s)?;
                crops.push(ca);
                member_b.push(cb);
                batch.push(s);
            }
            crops.extend(member_b);
            let labels: Vec<InteractionClass> = batch.iter().map(|s| s.label).collect();

            let mut g = Graph::new();
            let unions: Vec<&Image> = batch.iter().map(|s| &s.union_image).collect();
            let zi = model.interaction_forward(&mut g, model.interaction_input(&unions)?, b);
            let crop_imgs: Vec<&Image> = crops.iter().map(|c| &c.image).collect();
            let za = model.action_forward(&mut g, model.action_input(&crop_imgs)?, 2 * b);
            let z1 = g.gather_rows(za, &(0..b).collect::<Vec<_>>());
            let z2 = g.gather_rows(za, &(b..2 * b).collect::<Vec<_>>());
            let (_, flat) = model.fusion_forward(&mut g, zi, z1, z2);
            let p = model.interaction_head(&mut g, flat);

            // LDAM classification term
            let logits = g.value(p).clone();
            let mut cls = 0.0;
            let mut cls_grad = Array2::zeros(logits.dim());
            for (row, y) in labels.iter().enumerate() {
                let (v, gr) = ldam_loss_with_grad(&logits.row(row).to_vec(), y.index(), &margins)?;
                cls += v / b as f64;
                for (c, x) in gr.into_iter().enumerate() {
                    cls_grad[(row, c)] = x / b as f64;
                }
            }
            let cls_t = g.custom_scalar(cls, vec![(p, cls_grad)]);

            // alignment term
            let plan = if cfg.no_alignment { Vec::new() } else { alignment_plan(&labels) };
            let mut aln = 0.0;
            let aln_t = if plan.is_empty() {
                if !cfg.no_alignment {
                    skipped += 1;
                    log::debug!("step {step}: alignment skipped (no anchor/negative pair in batch)");
                }
                None
            } else {
                let zi_v = rows_of(g.value(zi));
                let za_v = rows_of(g.value(za));
                let mut gi = Array2::zeros((b, model.d()));
                let mut ga = Array2::zeros((2 * b, model.d()));
                let n = plan.len() as f64;
                for (i, negs) in &plan {
                    let ab = AlignmentBatch {
                        z_int: zi_v[*i].clone(),
                        z_act_pos: vec![za_v[*i].clone(), za_v[b + i].clone()],
                        z_int_negs: negs.iter().map(|&j| zi_v[j].clone()).collect(),
                    };
                    let (v, gr) = infonce_alignment_loss_with_grad(&ab, cfg.weights.tau)?;
                    aln += v / n;
                    let acc = |m: &mut Array2<f64>, row: usize, src: &[f64]| {
                        for (c, x) in src.iter().enumerate() {
                            m[(row, c)] += x / n;
                        }
                    };
                    acc(&mut gi, *i, &gr.z_int);
                    acc(&mut ga, *i, &gr.z_act_pos[0]);
                    acc(&mut ga, b + i, &gr.z_act_pos[1]);
                    for (k, &j) in negs.iter().enumerate() {
                        acc(&mut gi, j, &gr.z_int_negs[k]);
                    }
                }
                Some(g.custom_scalar(aln, vec![(zi, gi), (za, ga)]))
            };

            let (l1, l2) = cfg.weights.lambdas(step, total_steps);
            let l1 = if cfg.no_alignment { 0.0 } else { l1 };
            let total = l1 * aln + l2 * cls;
            check_finite(total, step)?;
            let mut loss = g.scale(cls_t, l2);
            if let Some(a) = aln_t {
                let a = g.scale(a, l1);
                loss = g.add(loss, a);
            }
            let member_labels: Vec<Option<ActionClass>> = crops.iter().map(|c| c.label).collect();
            if let Some(probe) = action_probe(&model, &mut g, za, &member_labels)? {
                check_finite(g.scalar(probe), step)?;
                loss = g.add(loss, probe);
            }
            let grads = g.backward(loss, &model.params);
            adam.step(&mut model.params, &grads, trainable);
            log.push(JointStepLog {
                step,
                loss_total: total,
                loss_aln: aln,
                loss_cls: cls,
                lambda2: l2,
            });
            step += 1;
        }
        if let Some(f1) = val_macro_f1(&model, dataset)? {
            log::info!("joint epoch {epoch}: validation macro-F1 {f1:.4}");
            val_hist.push(f1);
            if f1 > best.0 {
                best = (f1, epoch, model.clone());
            }
        }
    }
    if start.is_none() {
        // no validation split: the last model is the selected one
        best = (f64::NAN, cfg.epochs, model.clone());
    }

    let meta = |stage_step: usize, metrics: serde_json::Value| -> Result<CheckpointMeta> {
        Ok(CheckpointMeta {
            stage: "joint".into(),
            step: stage_step as u64,
            train_config: serde_json::to_value(cfg)?,
            metrics,
        })
    };
    let final_metrics = serde_json::json!({ "val_macro_f1": val_hist.last() });
    let best_metrics = serde_json::json!({ "val_macro_f1": if best.0.is_finite() { Some(best.0) } else { None }, "epoch": best.1 });
    Ok(JointOutcome {
        final_checkpoint: Checkpoint::new(model, meta(step, final_metrics)?),
        best_checkpoint: Checkpoint::new(best.2, meta(best.1 * steps_per_epoch, best_metrics)?),
        log,
        val_macro_f1: val_hist,
        best_epoch: best.1,
        trained_ids,
        alignment_skipped: skipped,
    })
}

pub fn write_joint_log(path: &Path, log: &[JointStepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pretrain_log(path: &Path, log: &[PretrainStepLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in log {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_dataset, ClassMix, SyntheticSceneSpec};

    fn tiny_encoder() -> EncoderConfig {
        EncoderConfig {
            input_size: 32,
            interaction_input_size: 40,
            d: 8,
            n_attention_heads: 2,
            token_dim: 4,
            conv_kernel: 32,
            conv_stride: 8,
            conv_channels: 2,
            ..EncoderConfig::default()
        }
    }

    fn dataset(n: usize, seed: u64) -> Dataset {
        generate_synthetic_dataset(&SyntheticSceneSpec {
            seed,
            n_action_samples: n,
            n_interaction_samples: n,
            class_mix: ClassMix::uniform(),
            split_fractions: [0.6, 0.2, 0.2],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn triplet_labels_are_valid_and_seeded() {
        let d = dataset(60, 2);
        let t = sample_triplets(&d.manifest, Split::Train, 2000, 5).unwrap();
        assert!(t.iter().all(|t| t.anchor.label == t.positive.label
            && t.anchor.label != t.negative.label
            && t.anchor.id != t.positive.id));
        let again = sample_triplets(&d.manifest, Split::Train, 2000, 5).unwrap();
        assert_eq!(t, again);
        assert!(t.iter().all(|t| t.anchor.split == Split::Train && t.negative.split == Split::Train));
    }

    #[test]
    fn one_class_is_not_enough() {
        let mut spec = SyntheticSceneSpec {
            n_action_samples: 10,
            n_interaction_samples: 0,
            ..Default::default()
        };
        spec.class_mix.action = [1.0, 0.0, 0.0, 0.0];
        spec.split_fractions = [1.0, 0.0, 0.0];
        let d = generate_synthetic_dataset(&spec).unwrap();
        assert!(matches!(
            sample_triplets(&d.manifest, Split::Train, 4, 0),
            Err(Error::InsufficientClassDiversity(_))
        ));
    }

    #[test]
    fn alignment_plan_counts() {
        use InteractionClass::*;
        assert!(alignment_plan(&[NoInteraction, NoInteraction]).is_empty());
        let plan = alignment_plan(&[NoInteraction, Mount, NoInteraction, NoInteraction]);
        assert_eq!(plan, vec![(1, vec![0, 2, 3])]);
        assert!(alignment_plan(&[Mount, Conflict]).is_empty());
    }

    #[test]
    fn joint_requires_checkpoint_unless_from_scratch() {
        let d = dataset(16, 1);
        let cfg = JointTrainConfig {
            epochs: 1,
            encoder: tiny_encoder(),
            ..Default::default()
        };
        assert!(matches!(train_joint(&d, None, &cfg), Err(Error::StageOrder(_))));
    }

    #[test]
    fn smoke_runs_are_deterministic() {
        let d = dataset(40, 4);
        let pcfg = PretrainConfig {
            epochs: 1,
            learning_rate: 1e-3,
            batch_size: 8,
            encoder: tiny_encoder(),
            ..Default::default()
        };
        let pre = pretrain_action_encoder(&d, &pcfg).unwrap();
        assert_eq!(pre.checkpoint.meta.stage, "pretrain");
        let jcfg = JointTrainConfig {
            epochs: 1,
            learning_rate: 1e-3,
            batch_size: 8,
            encoder: tiny_encoder(),
            ..Default::default()
        };
        let a = train_joint(&d, Some(&pre.checkpoint), &jcfg).unwrap();
        let b = train_joint(&d, Some(&pre.checkpoint), &jcfg).unwrap();
        assert_eq!(a.log, b.log);
        assert!(!a.log.is_empty());
        let held_out: BTreeSet<String> = d
            .manifest
            .records
            .iter()
            .filter(|r| r.split() != Split::Train)
            .map(|r| r.id().to_string())
            .collect();
        assert!(a.trained_ids.is_disjoint(&held_out));
        assert!(pre.trained_ids.is_disjoint(&held_out));
    }

    #[test]
    fn frozen_action_encoder_does_not_move() {
        let d = dataset(24, 6);
        let pcfg = PretrainConfig {
            epochs: 1,
            learning_rate: 1e-3,
            batch_size: 8,
            encoder: tiny_encoder(),
            ..Default::default()
        };
        let pre = pretrain_action_encoder(&d, &pcfg).unwrap();
        let jcfg = JointTrainConfig {
            epochs: 1,
            learning_rate: 1e-3,
            batch_size: 8,
            freeze_action_encoder: true,
            encoder: tiny_encoder(),
            ..Default::default()
        };
        let out = train_joint(&d, Some(&pre.checkpoint), &jcfg).unwrap();
        let m = &out.final_checkpoint.model;
        for (_, name, v) in pre.checkpoint.model.params.iter().filter(|(_, n, _)| n.starts_with("act.")) {
            assert_eq!(m.params.value(m.params.find(name).unwrap()), v, "{name}");
        }
    }
}
