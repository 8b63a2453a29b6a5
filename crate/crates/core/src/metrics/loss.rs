//! Loss functionals over per-voxel class distributions. These are scalar
//! measures only; nothing here optimizes.

use serde::{Deserialize, Serialize};

use crate::classes::{EMPTY, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::gaussian::Logits;

const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda1: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        // lambda1 = 0 is allowed so the other terms can be read off alone
        if !(self.lambda1 >= 0.0 && self.focal_alpha > 0.0 && self.focal_gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("invalid loss config {self:?}")));
        }
        Ok(())
    }
}

fn check(probs: &[Logits], gt: &[u8], mask: &[bool]) -> Result<()> {
    for len in [gt.len(), mask.len()] {
        if len != probs.len() {
            return Err(Error::LengthMismatch {
                expected: probs.len(),
                actual: len,
            });
        }
    }
    if let Some(&l) = gt.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::InvalidConfig(format!("label {l} out of range")));
    }
    Ok(())
}

/// Mean focal loss over masked voxels, with its gradient with respect to the
/// logits that produced `probs` through a softmax. Unmasked voxels get a
/// zero gradient.
pub fn focal_loss(
    probs: &[Logits],
    gt: &[u8],
    mask: &[bool],
    cfg: &LossConfig,
) -> Result<(f64, Vec<Logits>)> {
    check(probs, gt, mask)?;
    let (a, gamma) = (cfg.focal_alpha, cfg.focal_gamma);
    let n = mask.iter().filter(|&&m| m).count();
    let mut grad = vec![[0.0; NUM_CLASSES]; probs.len()];
    if n == 0 {
        return Ok((0.0, grad));
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    for i in (0..probs.len()).filter(|&i| mask[i]) {
        let y = gt[i] as usize;
        let p = probs[i][y].max(P_FLOOR);
        let q = 1.0 - p;
        total += -a * q.powf(gamma) * p.ln();
        // d/dp of −α(1−p)^γ log p
        let dfdp = a * (gamma * q.powf(gamma - 1.0) * p.ln() - q.powf(gamma) / p);
        for (j, g) in grad[i].iter_mut().enumerate() {
            let dpdz = p * (if j == y { 1.0 } else { 0.0 } - probs[i][j]);
            *g = dfdp * dpdz * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}

/// Gradient of the Lovász extension of the Jaccard loss at a ground-truth
/// indicator sorted by decreasing error.
fn lovasz_grad(gt_sorted: &[bool]) -> Vec<f64> {
    let gts = gt_sorted.iter().filter(|&&b| b).count() as f64;
    let mut out = Vec::with_capacity(gt_sorted.len());
    let (mut fg_seen, mut bg_seen) = (0.0, 0.0);
    let mut prev = 0.0;
    for &b in gt_sorted {
        if b {
            fg_seen += 1.0;
        } else {
            bg_seen += 1.0;
        }
        let jac = 1.0 - (gts - fg_seen) / (gts + bg_seen);
        out.push(jac - prev);
        prev = jac;
    }
    out
}

/// Lovász-softmax over the classes present in the masked ground truth.
pub fn lovasz_softmax(probs: &[Logits], gt: &[u8], mask: &[bool]) -> Result<f64> {
    check(probs, gt, mask)?;
    let idx: Vec<usize> = (0..probs.len()).filter(|&i| mask[i]).collect();
    let mut present = [false; NUM_CLASSES];
    for &i in &idx {
        present[gt[i] as usize] = true;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for c in (0..NUM_CLASSES).filter(|&c| present[c]) {
        sum += lovasz_class(probs, gt, &idx, c);
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

fn lovasz_class(probs: &[Logits], gt: &[u8], idx: &[usize], c: usize) -> f64 {
    let mut errs: Vec<(f64, bool)> = idx
        .iter()
        .map(|&i| {
            let fg = gt[i] as usize == c;
            let p = probs[i][c];
            (if fg { 1.0 - p } else { p }, fg)
        })
        .collect();
    errs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let fg: Vec<bool> = errs.iter().map(|e| e.1).collect();
    errs.iter().zip(lovasz_grad(&fg)).map(|(e, g)| e.0 * g).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalMode {
    /// Occupied (any non-empty class) against empty.
    Geo,
    /// Every class present in the masked ground truth.
    Sem,
}

/// Sum of `log P + log R + log S` for one class; terms with an empty
/// denominator are left out and ratios are floored at 1e-12 before the log.
fn affinity_logs(pairs: impl Iterator<Item = (f64, bool)>) -> f64 {
    let (mut tp, mut p_sum, mut pos, mut tn, mut neg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (p, is_c) in pairs {
        p_sum += p;
        if is_c {
            tp += p;
            pos += 1.0;
        } else {
            tn += 1.0 - p;
            neg += 1.0;
        }
    }
    let mut s = 0.0;
    for (num, den) in [(tp, p_sum), (tp, pos), (tn, neg)] {
        if den > 0.0 {
            s += (num / den).max(P_FLOOR).ln();
        }
    }
    s
}

/// Scene-class affinity loss.
pub fn scal_loss(probs: &[Logits], gt: &[u8], mask: &[bool], mode: ScalMode) -> Result<f64> {
    check(probs, gt, mask)?;
    let idx: Vec<usize> = (0..probs.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Ok(0.0);
    }
    let e = EMPTY as usize;
    match mode {
        ScalMode::Geo => {
            let logs = affinity_logs(idx.iter().map(|&i| (1.0 - probs[i][e], gt[i] != EMPTY)));
            Ok(-logs)
        }
        ScalMode::Sem => {
            let mut present = [false; NUM_CLASSES];
            for &i in &idx {
                present[gt[i] as usize] = true;
            }
            let classes: Vec<usize> = (0..NUM_CLASSES).filter(|&c| present[c]).collect();
            let total: f64 = classes
                .iter()
                .map(|&c| affinity_logs(idx.iter().map(|&i| (probs[i][c], gt[i] as usize == c))))
                .sum();
            Ok(-total / classes.len() as f64)
        }
    }
}

/// `λ₁·focal + lovasz + scal_geo + scal_sem`.
pub fn total_loss(probs: &[Logits], gt: &[u8], mask: &[bool], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let (focal, _) = focal_loss(probs, gt, mask, cfg)?;
    Ok(cfg.lambda1 * focal
        + lovasz_softmax(probs, gt, mask)?
        + scal_loss(probs, gt, mask, ScalMode::Geo)?
        + scal_loss(probs, gt, mask, ScalMode::Sem)?)
}
