//! Training objectives with closed-form gradients.
//!
//! Every `*_with_grad` function returns the same value as its plain
//! counterpart plus the gradient with respect to each vector argument.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which term of the joint objective follows the decaying schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayTarget {
    /// λ₂ (classification) decays from `start` to `end`; λ₁ stays fixed.
    #[default]
    Classification,
    /// λ₁ (alignment) decays from `start` to `end`; λ₂ stays at `lambda1`.
    Alignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lambda2Schedule {
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub decay: DecayTarget,
}

impl Default for Lambda2Schedule {
    fn default() -> Self {
        Self {
            start: 0.1,
            end: 0.0,
            decay: DecayTarget::Classification,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub alpha: f64,
    pub tau: f64,
    pub lambda1: f64,
    pub lambda2_schedule: Lambda2Schedule,
    pub ldam_margin_scale: f64,
    pub zero_mean_weight: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            tau: 0.03,
            lambda1: 1.0,
            lambda2_schedule: Lambda2Schedule::default(),
            ldam_margin_scale: 4.0,
            zero_mean_weight: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let s = &self.lambda2_schedule;
        if !(self.alpha > 0.0) || !(self.tau > 0.0) || !(self.ldam_margin_scale > 0.0) {
            return Err(Error::InvalidConfig("alpha, tau and ldam_margin_scale must be > 0".into()));
        }
        if !(s.start >= 0.0 && s.end >= 0.0) || !(self.lambda1 >= 0.0) || !(self.zero_mean_weight >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be >= 0".into()));
        }
        Ok(())
    }

    /// `(λ₁, λ₂)` at `step` of `total_steps`; the ramp is linear over
    /// `[0, total_steps - 1]` and clamped outside it.
    pub fn lambdas(&self, step: usize, total_steps: usize) -> (f64, f64) {
        let s = &self.lambda2_schedule;
        let frac = if total_steps <= 1 {
            if step == 0 { 0.0 } else { 1.0 }
        } else {
            (step as f64 / (total_steps - 1) as f64).min(1.0)
        };
        let ramp = s.start + (s.end - s.start) * frac;
        match s.decay {
            DecayTarget::Classification => (self.lambda1, ramp),
            DecayTarget::Alignment => (ramp, self.lambda1),
        }
    }
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// `max(0, |a - p| - |a - n| + alpha)` with Euclidean distances.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], alpha: f64) -> Result<f64> {
    check_dims(a, p)?;
    check_dims(a, n)?;
    Ok((dist(a, p) - dist(a, n) + alpha).max(0.0))
}

/// Gradients `[d/da, d/dp, d/dn]`; the distance gradient at zero distance is taken as 0.
pub fn triplet_loss_with_grad(a: &[f64], p: &[f64], n: &[f64], alpha: f64) -> Result<(f64, [Vec<f64>; 3])> {
    let value = triplet_loss(a, p, n, alpha)?;
    let d = a.len();
    let mut grads = [vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    if value > 0.0 {
        let dap = dist(a, p);
        let dan = dist(a, n);
        for i in 0..d {
            let up = if dap > 0.0 { (a[i] - p[i]) / dap } else { 0.0 };
            let un = if dan > 0.0 { (a[i] - n[i]) / dan } else { 0.0 };
            grads[0][i] = up - un;
            grads[1][i] = -up;
            grads[2][i] = un;
        }
    }
    Ok((value, grads))
}

/// Squared norm of the batch mean.
pub fn zero_mean_reg(batch: &[&[f64]]) -> Result<f64> {
    Ok(zero_mean_reg_with_grad(batch)?.0)
}

pub fn zero_mean_reg_with_grad(batch: &[&[f64]]) -> Result<(f64, Vec<Vec<f64>>)> {
    let first = batch.first().ok_or(Error::EmptyBatch)?;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for row in batch {
        check_dims(first, row)?;
        for (m, x) in mean.iter_mut().zip(row.iter()) {
            *m += x;
        }
    }
    let n = batch.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let value = mean.iter().map(|m| m * m).sum();
    let g: Vec<f64> = mean.iter().map(|m| 2.0 * m / n).collect();
    Ok((value, vec![g; batch.len()]))
}

/// An interaction anchor, its decomposed-action positives and negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentBatch {
    pub z_int: Vec<f64>,
    pub z_act_pos: Vec<Vec<f64>>,
    pub z_int_negs: Vec<Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// Cosine similarity and its gradients with respect to u and v.
fn cosine_with_grad(u: &[f64], v: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNormEmbedding);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let s = dot / (nu * nv);
    let gu = u.iter().zip(v).map(|(a, b)| b / (nu * nv) - s * a / (nu * nu)).collect();
    let gv = u.iter().zip(v).map(|(a, b)| a / (nu * nv) - s * b / (nv * nv)).collect();
    Ok((s, gu, gv))
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u, v)?;
    Ok(cosine_with_grad(u, v)?.0)
}

/// Gradients of [`infonce_alignment_loss`] for each vector of the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentGrad {
    pub z_int: Vec<f64>,
    pub z_act_pos: Vec<Vec<f64>>,
    pub z_int_negs: Vec<Vec<f64>>,
}

pub fn infonce_alignment_loss(batch: &AlignmentBatch, tau: f64) -> Result<f64> {
    Ok(infonce_alignment_loss_with_grad(batch, tau)?.0)
}

/// `-log(e^{s+/τ} / (e^{s+/τ} + Σ_j e^{s_j-/τ}))` with cosine similarities,
/// averaged over the positives.
pub fn infonce_alignment_loss_with_grad(batch: &AlignmentBatch, tau: f64) -> Result<(f64, AlignmentGrad)> {
    if batch.z_int_negs.is_empty() || batch.z_act_pos.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("tau must be > 0".into()));
    }
    let d = batch.z_int.len();
    for v in batch.z_act_pos.iter().chain(&batch.z_int_negs) {
        check_dims(&batch.z_int, v)?;
    }
    let negs: Vec<(f64, Vec<f64>, Vec<f64>)> = batch
        .z_int_negs
        .iter()
        .map(|n| cosine_with_grad(&batch.z_int, n))
        .collect::<Result<_>>()?;
    let mut grad = AlignmentGrad {
        z_int: vec![0.0; d],
        z_act_pos: vec![vec![0.0; d]; batch.z_act_pos.len()],
        z_int_negs: vec![vec![0.0; d]; batch.z_int_negs.len()],
    };
    let weight = 1.0 / batch.z_act_pos.len() as f64;
    let mut total = 0.0;
    for (pi, pos) in batch.z_act_pos.iter().enumerate() {
        let (sp, gu_p, gv_p) = cosine_with_grad(&batch.z_int, pos)?;
        let logits: Vec<f64> = std::iter::once(sp / tau).chain(negs.iter().map(|n| n.0 / tau)).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        total += weight * (m + z.ln() - logits[0]);
        // dL/dlogit_k = softmax_k - [k == 0]
        let soft: Vec<f64> = logits.iter().map(|l| (l - m).exp() / z).collect();
        let c0 = weight * (soft[0] - 1.0) / tau;
        for i in 0..d {
            grad.z_int[i] += c0 * gu_p[i];
            grad.z_act_pos[pi][i] += c0 * gv_p[i];
        }
        for (j, (_, gu, gv)) in negs.iter().enumerate() {
            let cj = weight * soft[j + 1] / tau;
            for i in 0..d {
                grad.z_int[i] += cj * gu[i];
                grad.z_int_negs[j][i] += cj * gv[i];
            }
        }
    }
    Ok((total, grad))
}

/// `Δ_j = scale / n_j^{1/4}`.
pub fn ldam_margins(class_counts: &[usize], scale: f64) -> Result<Vec<f64>> {
    class_counts
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            if n == 0 {
                Err(Error::ZeroCount(format!("class index {j}")))
            } else {
                Ok(scale / (n as f64).powf(0.25))
            }
        })
        .collect()
}

pub fn ldam_loss(p: &[f64], y: usize, margins: &[f64]) -> Result<f64> {
    Ok(ldam_loss_with_grad(p, y, margins)?.0)
}

/// Cross-entropy on logits whose true-class entry is lowered by `Δ_y`.
pub fn ldam_loss_with_grad(p: &[f64], y: usize, margins: &[f64]) -> Result<(f64, Vec<f64>)> {
    if y >= p.len() {
        return Err(Error::IndexOutOfRange { index: y, len: p.len() });
    }
    check_dims(p, margins)?;
    let mut adj = p.to_vec();
    adj[y] -= margins[y];
    let m = adj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = adj.iter().map(|a| (a - m).exp()).sum();
    let value = m + z.ln() - adj[y];
    let mut g: Vec<f64> = adj.iter().map(|a| (a - m).exp() / z).collect();
    g[y] -= 1.0;
    Ok((value, g))
}

pub fn softmax_cross_entropy(p: &[f64], y: usize) -> Result<f64> {
    ldam_loss(p, y, &vec![0.0; p.len()])
}

pub fn softmax(p: &[f64]) -> Vec<f64> {
    let m = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = p.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// `λ₁·aln + λ₂(step)·cls`.
pub fn total_joint_loss(aln: f64, cls: f64, step: usize, total_steps: usize, weights: &LossWeights) -> f64 {
    let (l1, l2) = weights.lambdas(step, total_steps);
    l1 * aln + l2 * cls
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn triplet_examples() {
        let a = [0.0, 0.0];
        assert_eq!(triplet_loss(&a, &a, &[0.7, 0.0], 0.5).unwrap(), 0.0);
        assert_eq!(triplet_loss(&a, &a, &a, 0.5).unwrap(), 0.5);
        let v = triplet_loss(&a, &[0.2, 0.0], &[0.0, 0.4], 0.5).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
        assert!(matches!(triplet_loss(&a, &[0.0], &a, 0.5), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_mean_examples() {
        assert_eq!(zero_mean_reg(&[&[1.0, -2.0], &[-1.0, 2.0]]).unwrap(), 0.0);
        assert_eq!(zero_mean_reg(&[&[3.0, 4.0]]).unwrap(), 25.0);
        assert_eq!(zero_mean_reg(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(), 0.5);
        assert!(matches!(zero_mean_reg(&[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn infonce_examples() {
        let u = vec![1.0, 0.0];
        let eq = AlignmentBatch {
            z_int: u.clone(),
            z_act_pos: vec![u.clone()],
            z_int_negs: vec![u.clone(); 3],
        };
        assert!((infonce_alignment_loss(&eq, 0.7).unwrap() - 4f64.ln()).abs() < 1e-12);
        let one = AlignmentBatch { z_int_negs: vec![vec![2.0, 0.0]], ..eq.clone() };
        assert!((infonce_alignment_loss(&one, 0.03).unwrap() - 2f64.ln()).abs() < 1e-12);
        let sep = AlignmentBatch {
            z_int: u.clone(),
            z_act_pos: vec![u.clone()],
            z_int_negs: vec![vec![-1.0, 0.0]; 3],
        };
        assert!(infonce_alignment_loss(&sep, 0.01).unwrap() < 1e-50);
        let zero = AlignmentBatch { z_int: vec![0.0, 0.0], ..sep };
        assert!(matches!(infonce_alignment_loss(&zero, 0.1), Err(Error::ZeroNormEmbedding)));
    }

    #[test]
    fn ldam_examples() {
        assert_eq!(ldam_margins(&[1, 1, 1, 1], 4.0).unwrap(), vec![4.0; 4]);
        assert!((ldam_margins(&[16], 4.0).unwrap()[0] - 2.0).abs() < 1e-12);
        assert!(matches!(ldam_margins(&[3, 0], 4.0), Err(Error::ZeroCount(_))));
        let uniform = ldam_loss(&[0.3; 4], 2, &[0.0; 4]).unwrap();
        assert!((uniform - 4f64.ln()).abs() < 1e-12);
        let v = ldam_loss(&[2.0, 0.0, 0.0, 0.0], 0, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((v - 0.7437).abs() < 1e-4);
        assert!(matches!(ldam_loss(&[0.0; 4], 4, &[0.0; 4]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn schedule_endpoints() {
        let w = LossWeights::default();
        assert_eq!(w.lambdas(0, 11), (1.0, 0.1));
        assert!((w.lambdas(5, 11).1 - 0.05).abs() < 1e-15);
        assert_eq!(w.lambdas(10, 11), (1.0, 0.0));
        assert_eq!(w.lambdas(99, 11), (1.0, 0.0));
        assert!((total_joint_loss(2.0, 3.0, 0, 11, &w) - 2.3).abs() < 1e-15);
        let swapped = LossWeights {
            lambda2_schedule: Lambda2Schedule { decay: DecayTarget::Alignment, ..Lambda2Schedule::default() },
            ..w
        };
        assert_eq!(swapped.lambdas(0, 11), (0.1, 1.0));
    }

    fn vecs(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        proptest::collection::vec(proptest::collection::vec(-2.0..2.0f64, d), n)
    }

    proptest! {
        #[test]
        fn triplet_nonnegative_and_zero_iff_separated(v in vecs(3, 4), alpha in 0.01..2.0f64) {
            let l = triplet_loss(&v[0], &v[1], &v[2], alpha).unwrap();
            prop_assert!(l >= 0.0);
            let sep = dist(&v[0], &v[2]) >= dist(&v[0], &v[1]) + alpha;
            prop_assert_eq!(l == 0.0, sep);
        }

        #[test]
        fn infonce_scale_invariant(v in vecs(5, 3), scales in proptest::collection::vec(0.1..10.0f64, 5)) {
            prop_assume!(v.iter().all(|x| norm(x) > 1e-3));
            let b = AlignmentBatch { z_int: v[0].clone(), z_act_pos: vec![v[1].clone(), v[2].clone()], z_int_negs: v[3..].to_vec() };
            let s = |k: usize| v[k].iter().map(|x| x * scales[k]).collect::<Vec<_>>();
            let bs = AlignmentBatch { z_int: s(0), z_act_pos: vec![s(1), s(2)], z_int_negs: vec![s(3), s(4)] };
            let (a, b2) = (infonce_alignment_loss(&b, 0.1).unwrap(), infonce_alignment_loss(&bs, 0.1).unwrap());
            prop_assert!((a - b2).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn ldam_nondecreasing_in_true_margin(p in proptest::collection::vec(-5.0..5.0f64, 4), y in 0usize..4, d1 in 0.0..3.0f64, extra in 0.0..3.0f64) {
            let mut m = vec![0.2; 4];
            m[y] = d1;
            let lo = ldam_loss(&p, y, &m).unwrap();
            m[y] = d1 + extra;
            prop_assert!(ldam_loss(&p, y, &m).unwrap() >= lo);
        }

        #[test]
        fn zero_mean_is_order_invariant(v in vecs(4, 3)) {
            let fwd: Vec<&[f64]> = v.iter().map(|x| x.as_slice()).collect();
            let rev: Vec<&[f64]> = v.iter().rev().map(|x| x.as_slice()).collect();
            prop_assert!((zero_mean_reg(&fwd).unwrap() - zero_mean_reg(&rev).unwrap()).abs() < 1e-12);
        }
    }
}
