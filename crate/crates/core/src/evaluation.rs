//! Classification metrics, occlusion sensitivity, embedding export, PCA and
//! nearest-neighbour probing.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ActionClass, Dataset, InteractionClass, InteractionSample, Split};
use crate::encoders::CattleActModel;
use crate::error::{Error, Result};
use crate::image::Image;

/// Rows are truths, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_order: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub support: Vec<usize>,
    pub macro_f1: f64,
    /// Support-weighted mean of the per-class F1.
    pub weighted_f1: f64,
    /// Classes with no truths and no predictions; their F1 is 0 by convention.
    pub empty_classes: Vec<String>,
}

fn index_labels(labels: &[&str], class_order: &[&str]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|l| {
            class_order
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::UnknownLabel(l.to_string()))
        })
        .collect()
}

pub fn confusion_and_metrics(
    preds: &[&str],
    truths: &[&str],
    class_order: &[&str],
) -> Result<(ConfusionMatrix, MetricsReport)> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    let p = index_labels(preds, class_order)?;
    let t = index_labels(truths, class_order)?;
    confusion_from_indices(&p, &t, class_order)
}

/// Index-based variant; every index must be `< class_order.len()`.
pub fn confusion_from_indices(
    preds: &[usize],
    truths: &[usize],
    class_order: &[&str],
) -> Result<(ConfusionMatrix, MetricsReport)> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    let c = class_order.len();
    let mut counts = vec![vec![0usize; c]; c];
    for (&p, &t) in preds.iter().zip(truths) {
        if p >= c || t >= c {
            return Err(Error::IndexOutOfRange { index: p.max(t), len: c });
        }
        counts[t][p] += 1;
    }
    let total = preds.len();
    let correct: usize = (0..c).map(|k| counts[k][k]).sum();
    let mut f1 = vec![0.0; c];
    let mut precision = vec![0.0; c];
    let mut recall = vec![0.0; c];
    let mut support = vec![0usize; c];
    let mut empty = Vec::new();
    for k in 0..c {
        let tp = counts[k][k] as f64;
        let predicted: usize = (0..c).map(|r| counts[r][k]).sum();
        let actual: usize = counts[k].iter().sum();
        support[k] = actual;
        precision[k] = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        recall[k] = if actual > 0 { tp / actual as f64 } else { 0.0 };
        f1[k] = if precision[k] + recall[k] > 0.0 {
            2.0 * precision[k] * recall[k] / (precision[k] + recall[k])
        } else {
            0.0
        };
        if predicted == 0 && actual == 0 {
            log::info!("class {} has no truths and no predictions; F1 = 0", class_order[k]);
            empty.push(class_order[k].to_string());
        }
    }
    let report = MetricsReport {
        accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
        macro_f1: if c > 0 { f1.iter().sum::<f64>() / c as f64 } else { 0.0 },
        weighted_f1: if total > 0 {
            f1.iter().zip(&support).map(|(f, s)| f * *s as f64).sum::<f64>() / total as f64
        } else {
            0.0
        },
        per_class_f1: f1,
        per_class_precision: precision,
        per_class_recall: recall,
        support,
        empty_classes: empty,
    };
    Ok((
        ConfusionMatrix {
            class_order: class_order.iter().map(|s| s.to_string()).collect(),
            counts,
        },
        report,
    ))
}

/// One-vs-rest accuracy and F1 for a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryClassReport {
    pub class: String,
    pub accuracy: f64,
    pub f1: f64,
}

pub fn per_class_binary_report(
    preds: &[&str],
    truths: &[&str],
    class_order: &[&str],
) -> Result<Vec<BinaryClassReport>> {
    let (cm, _) = confusion_and_metrics(preds, truths, class_order)?;
    Ok(binary_report_from_confusion(&cm))
}

pub fn binary_report_from_confusion(cm: &ConfusionMatrix) -> Vec<BinaryClassReport> {
    let c = cm.class_order.len();
    let total = cm.total() as f64;
    (0..c)
        .map(|k| {
            let tp = cm.counts[k][k] as f64;
            let fp = (0..c).filter(|&r| r != k).map(|r| cm.counts[r][k]).sum::<usize>() as f64;
            let fn_ = (0..c).filter(|&q| q != k).map(|q| cm.counts[k][q]).sum::<usize>() as f64;
            let tn = total - tp - fp - fn_;
            let f1 = if 2.0 * tp + fp + fn_ > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
            BinaryClassReport {
                class: cm.class_order[k].clone(),
                accuracy: if total > 0.0 { (tp + tn) / total } else { 0.0 },
                f1,
            }
        })
        .collect()
}

/// Table with one row per class: one-vs-rest accuracy and F1 in percent.
pub fn format_binary_table(rows: &[BinaryClassReport]) -> String {
    let mut s = format!("{:<16}{:>10}{:>10}\n", "class", "acc (%)", "F1 (%)");
    for r in rows {
        s.push_str(&format!("{:<16}{:>10.1}{:>10.1}\n", r.class, 100.0 * r.accuracy, 100.0 * r.f1));
    }
    s
}

pub fn format_metrics(cm: &ConfusionMatrix, report: &MetricsReport) -> String {
    let mut s = format!(
        "accuracy {:.4}  macro-F1 {:.4}  weighted-F1 {:.4}\n",
        report.accuracy, report.macro_f1, report.weighted_f1
    );
    s.push_str(&format!("{:<16}", "truth \\ pred"));
    for c in &cm.class_order {
        s.push_str(&format!("{:>16}", c));
    }
    s.push('\n');
    for (name, row) in cm.class_order.iter().zip(&cm.counts) {
        s.push_str(&format!("{:<16}", name));
        for v in row {
            s.push_str(&format!("{:>16}", v));
        }
        s.push('\n');
    }
    if !report.empty_classes.is_empty() {
        s.push_str(&format!(
            "classes with no samples and no predictions (F1 = 0): {}\n",
            report.empty_classes.join(", ")
        ));
    }
    s
}

/// One line of the raw prediction CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sample_id: String,
    pub truth: String,
    pub pred: String,
    pub score_no_interaction: f64,
    pub score_interest: f64,
    pub score_conflict: f64,
    pub score_mount: f64,
}

pub fn write_predictions_csv(path: &Path, rows: &[PredictionRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Softmax scores and argmax predictions of the model on a dataset split.
pub fn predict_interactions(model: &CattleActModel, dataset: &Dataset, split: Split) -> Result<Vec<PredictionRow>> {
    let samples = dataset.interaction_samples(split);
    let logits = model.interaction_logits(&samples)?;
    Ok(samples
        .iter()
        .zip(logits.rows())
        .map(|(s, row)| {
            let p = crate::losses::softmax(&row.to_vec());
            let pred = p
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b })
                .0;
            PredictionRow {
                sample_id: s.id.clone(),
                truth: s.label.as_str().to_string(),
                pred: InteractionClass::NAMES[pred].to_string(),
                score_no_interaction: p[0],
                score_interest: p[1],
                score_conflict: p[2],
                score_mount: p[3],
            }
        })
        .collect())
}

pub fn metrics_from_predictions(rows: &[PredictionRow]) -> Result<(ConfusionMatrix, MetricsReport)> {
    let preds: Vec<&str> = rows.iter().map(|r| r.pred.as_str()).collect();
    let truths: Vec<&str> = rows.iter().map(|r| r.truth.as_str()).collect();
    confusion_and_metrics(&preds, &truths, InteractionClass::NAMES)
}

/// Score-drop grid for one occluder position per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionMap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major drops `baseline - occluded score`.
    pub drops: Vec<f64>,
    pub patch_size: usize,
    pub stride: usize,
    pub baseline_score: f64,
    pub target_class: usize,
}

impl OcclusionMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.drops[row * self.cols + col]
    }

    /// `(row, col)` of the largest drop; first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &d) in self.drops.iter().enumerate() {
            if d > self.drops[best] {
                best = i;
            }
        }
        (best / self.cols, best % self.cols)
    }

    /// Pixel window `(row0, col0, size)` of a cell.
    pub fn cell_window(&self, row: usize, col: usize) -> (usize, usize, usize) {
        (row * self.stride, col * self.stride, self.patch_size)
    }

    /// Heatmap image (drops min-max scaled, red for high).
    pub fn to_image(&self) -> Image {
        let lo = self.drops.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.drops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut img = Image::new(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = ((self.get(r, c) - lo) / span) as f32;
                img.set(r, c, [v, 0.2 * (1.0 - v), 1.0 - v]);
            }
        }
        img
    }
}

/// Slides a `patch_size` square filled with `fill` over `image` and records
/// how much `score` falls at each position.
pub fn occlusion_sensitivity_map(
    image: &Image,
    score: impl Fn(&Image) -> Result<f64>,
    target_class: usize,
    patch_size: usize,
    stride: usize,
    fill: [f32; 3],
) -> Result<OcclusionMap> {
    let (h, w) = (image.height(), image.width());
    if patch_size == 0 || patch_size > h || patch_size > w {
        return Err(Error::PatchLargerThanImage {
            patch: patch_size,
            height: h,
            width: w,
        });
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("stride must be positive".into()));
    }
    let rows = (h - patch_size) / stride + 1;
    let cols = (w - patch_size) / stride + 1;
    let baseline = score(image)?;
    let mut drops = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut occluded = image.clone();
            occluded.fill_rect(r * stride, c * stride, r * stride + patch_size, c * stride + patch_size, fill);
            drops.push(baseline - score(&occluded)?);
        }
    }
    Ok(OcclusionMap {
        rows,
        cols,
        drops,
        patch_size,
        stride,
        baseline_score: baseline,
        target_class,
    })
}

/// Occlusion map over a pair's union image. Member crops are re-cut from the
/// occluded union, so a patch reaches both encoders.
pub fn pair_occlusion_map(
    model: &CattleActModel,
    sample: &InteractionSample,
    target_class: usize,
    patch_size: usize,
    stride: usize,
    fill: [f32; 3],
) -> Result<OcclusionMap> {
    if target_class >= InteractionClass::NAMES.len() {
        return Err(Error::IndexOutOfRange { index: target_class, len: InteractionClass::NAMES.len() });
    }
    let score = |img: &Image| {
        let mut s = sample.clone();
        s.union_image = img.clone();
        let logits = model.interaction_logits(std::slice::from_ref(&s))?;
        Ok(crate::losses::softmax(&logits.row(0).to_vec())[target_class])
    };
    occlusion_sensitivity_map(&sample.union_image, score, target_class, patch_size, stride, fill)
}

/// Occlusion map of the action head's score on a single crop.
pub fn action_occlusion_map(
    model: &CattleActModel,
    image: &Image,
    target_class: usize,
    patch_size: usize,
    stride: usize,
    fill: [f32; 3],
) -> Result<OcclusionMap> {
    if target_class >= ActionClass::NAMES.len() {
        return Err(Error::IndexOutOfRange { index: target_class, len: ActionClass::NAMES.len() });
    }
    let score = |img: &Image| {
        let logits = model.action_logits(&[img])?;
        Ok(crate::losses::softmax(&logits.row(0).to_vec())[target_class])
    };
    occlusion_sensitivity_map(image, score, target_class, patch_size, stride, fill)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Action = 0,
    Interaction = 1,
}

/// Label byte for rows without a label.
pub const NO_LABEL: u8 = 255;
pub const DUMP_MAGIC: &[u8; 4] = b"CAEM";
pub const DUMP_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub sample_id: String,
    pub kind: EmbeddingKind,
    /// Class index within the kind's class order, or [`NO_LABEL`].
    pub label: u8,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub d: usize,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingDump {
    pub fn new(d: usize, rows: Vec<EmbeddingRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if r.values.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.values.len(),
                });
            }
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate sample id {}", r.sample_id)));
            }
        }
        Ok(Self { d, rows })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for r in &self.rows {
            out.extend_from_slice(&(r.sample_id.len() as u32).to_le_bytes());
            out.extend_from_slice(r.sample_id.as_bytes());
            out.push(r.kind as u8);
            out.push(r.label);
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Format {
            path: "<embedding dump>".into(),
            message: m.to_string(),
        };
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != DUMP_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().expect("2"));
        if version != DUMP_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
        let d = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u32::from_le_bytes(take(4)?.try_into().expect("4")) as usize;
            let sample_id = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("id is not UTF-8"))?;
            let kind = match take(1)?[0] {
                0 => EmbeddingKind::Action,
                1 => EmbeddingKind::Interaction,
                k => return Err(bad(&format!("unknown kind byte {k}"))),
            };
            let label = take(1)?[0];
            let values = take(4 * d)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
                .collect();
            rows.push(EmbeddingRow {
                sample_id,
                kind,
                label,
                values,
            });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Self::new(d, rows)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_bytes(&fs::read(path)?).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.values.iter().map(|&v| v as f64).collect())
            .collect()
    }
}

/// Action crops through the action encoder and pair crops through the
/// interaction encoder, sorted by sample id. `split = None` exports all.
pub fn export_embeddings(model: &CattleActModel, dataset: &Dataset, split: Option<Split>) -> Result<EmbeddingDump> {
    let keep = |s: Split| split.is_none_or(|want| want == s);
    let mut rows = Vec::new();
    let actions: Vec<_> = dataset.manifest.actions().filter(|r| keep(r.split)).collect();
    for chunk in actions.chunks(64) {
        let samples: Vec<_> = chunk.iter().map(|r| dataset.action_sample(r)).collect();
        let z = model.encode_actions(&samples.iter().map(|s| &s.image).collect::<Vec<_>>())?;
        for (s, row) in samples.iter().zip(z.rows()) {
            rows.push(EmbeddingRow {
                sample_id: s.id.clone(),
                kind: EmbeddingKind::Action,
                label: s.label.map_or(NO_LABEL, |l: ActionClass| l.index() as u8),
                values: row.iter().map(|&v| v as f32).collect(),
            });
        }
    }
    let pairs: Vec<_> = dataset.manifest.interactions().filter(|r| keep(r.split)).collect();
    for chunk in pairs.chunks(64) {
        let samples: Vec<_> = chunk.iter().map(|r| dataset.interaction_sample(r)).collect();
        let z = model.encode_interactions(&samples.iter().map(|s| &s.union_image).collect::<Vec<_>>())?;
        for (s, row) in samples.iter().zip(z.rows()) {
            rows.push(EmbeddingRow {
                sample_id: s.id.clone(),
                kind: EmbeddingKind::Interaction,
                label: s.label.index() as u8,
                values: row.iter().map(|&v| v as f32).collect(),
            });
        }
    }
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    EmbeddingDump::new(model.d(), rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// `n x k` coordinates.
    pub coords: Vec<Vec<f64>>,
    /// `k` unit components of length D (zero when rank deficient).
    pub components: Vec<Vec<f64>>,
    /// All singular values of the centered data, descending.
    pub singular_values: Vec<f64>,
    /// Fewer than `k` non-zero singular values; missing components are zero.
    pub rank_deficient: bool,
}

/// Projection of mean-centered rows onto the top-`k` principal directions;
/// each component's largest-magnitude entry is made positive.
pub fn pca_project(rows: &[Vec<f64>], k: usize) -> Result<PcaProjection> {
    let n = rows.len();
    if n < k || n == 0 {
        return Err(Error::InsufficientPoints { needed: k.max(1), got: n });
    }
    let d = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    // Eigen-decomposition of the D x D scatter matrix. nalgebra's SVD returned
    // visibly wrong singular vectors on some small centered inputs.
    let eig = nalgebra::SymmetricEigen::new(x.transpose() * &x);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let sv: Vec<f64> = order.iter().take(n.min(d)).map(|&i| eig.eigenvalues[i].max(0.0).sqrt()).collect();
    let v_t = eig.eigenvectors.transpose();
    // square roots of eigenvalues carry ~sqrt(eps) relative noise
    let tol = 1e-6 * sv.first().copied().unwrap_or(0.0).max(1e-300);
    let mut components = Vec::with_capacity(k);
    let mut rank_deficient = false;
    for c in 0..k {
        if c < sv.len() && sv[c] > tol {
            let mut comp: Vec<f64> = v_t.row(order[c]).iter().copied().collect();
            let lead = comp.iter().cloned().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if lead < 0.0 {
                comp.iter_mut().for_each(|v| *v = -*v);
            }
            components.push(comp);
        } else {
            rank_deficient = true;
            components.push(vec![0.0; d]);
        }
    }
    if rank_deficient {
        log::warn!("PCA: fewer than {k} non-zero singular values; missing components are zero");
    }
    let coords = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|comp| (0..d).map(|j| x[(i, j)] * comp[j]).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        coords,
        components,
        singular_values: sv,
        rank_deficient,
    })
}

/// Majority vote among the `k` nearest training rows (Euclidean); ties go to
/// the class with the smallest mean distance among the voters.
pub fn knn_classify(train: &[(Vec<f64>, usize)], test: &[Vec<f64>], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > train.len() {
        return Err(Error::InvalidConfig(format!("k = {k} must lie in 1..={}", train.len())));
    }
    let d = train[0].0.len();
    for v in train.iter().map(|t| &t.0).chain(test.iter()) {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v.len() });
        }
    }
    let n_classes = train.iter().map(|t| t.1).max().unwrap_or(0) + 1;
    Ok(test
        .iter()
        .map(|q| {
            let mut dists: Vec<(f64, usize)> = train
                .iter()
                .map(|(x, y)| (x.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), *y))
                .collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut votes = vec![0usize; n_classes];
            let mut dsum = vec![0.0; n_classes];
            for &(dist, y) in &dists[..k] {
                votes[y] += 1;
                dsum[y] += dist;
            }
            (0..n_classes)
                .filter(|&c| votes[c] > 0)
                .min_by(|&a, &b| {
                    votes[b]
                        .cmp(&votes[a])
                        .then((dsum[a] / votes[a] as f64).total_cmp(&(dsum[b] / votes[b] as f64)))
                })
                .expect("k >= 1")
        })
        .collect())
}

/// Mean pairwise cosine similarity within classes and across classes.
pub fn cosine_class_separation(rows: &[(Vec<f64>, usize)]) -> (f64, f64) {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let unit: Vec<(Vec<f64>, usize)> = rows
        .iter()
        .map(|(v, y)| {
            let n = norm(v);
            (v.iter().map(|x| x / n).collect(), *y)
        })
        .collect();
    let (mut intra, mut ni, mut inter, mut ne) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..unit.len() {
        for j in i + 1..unit.len() {
            let s: f64 = unit[i].0.iter().zip(&unit[j].0).map(|(a, b)| a * b).sum();
            if unit[i].1 == unit[j].1 {
                intra += s;
                ni += 1;
            } else {
                inter += s;
                ne += 1;
            }
        }
    }
    (intra / ni.max(1) as f64, inter / ne.max(1) as f64)
}
