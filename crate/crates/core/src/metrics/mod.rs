//! IoU/mIoU scoring, loss functionals and the look-back protocol.

mod loss;

pub use loss::{focal_loss, lovasz_softmax, scal_loss, total_loss, LossConfig, ScalMode};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::classes::{CLASS_NAMES, EMPTY, NUM_CLASSES};
use crate::dataset::{frame_masks, splice_masks, GlobalScene};
use crate::error::{Error, Result};
use crate::grid::{VoxelGrid, VoxelMask};

/// Number of semantic (non-empty) classes.
pub const NUM_SEMANTIC: usize = NUM_CLASSES - 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    /// Occupied-vs-empty Jaccard.
    pub iou: f64,
    /// Jaccard of classes 1..=11; `None` when the class is absent from both
    /// prediction and ground truth under the mask.
    pub per_class_iou: [Option<f64>; NUM_SEMANTIC],
    pub miou: f64,
    pub voxel_count: usize,
}

impl ScoreReport {
    pub fn to_json(&self) -> Value {
        let mut per_class = Map::new();
        for (c, v) in self.per_class_iou.iter().enumerate() {
            per_class.insert(CLASS_NAMES[c + 1].to_string(), json!(v));
        }
        json!({
            "iou": self.iou,
            "miou": self.miou,
            "per_class": per_class,
            "voxels": self.voxel_count,
        })
    }
}

fn jaccard(inter: usize, union: usize) -> f64 {
    // nothing to get wrong on an empty union
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Scores `pred` against `gt` over the voxels set in `mask`.
pub fn score(pred: &VoxelGrid, gt: &VoxelGrid, mask: &VoxelMask) -> Result<ScoreReport> {
    if !pred.geometry.same_as(&gt.geometry)
        || !mask.geometry.same_as(&gt.geometry)
        || pred.labels.len() != gt.labels.len()
        || mask.bits.len() != gt.labels.len()
    {
        return Err(Error::GeometryMismatch);
    }
    // confusion[p][g]
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    let mut n = 0usize;
    for ((&p, &g), &m) in pred.labels.iter().zip(&gt.labels).zip(&mask.bits) {
        if m {
            confusion[p as usize][g as usize] += 1;
            n += 1;
        }
    }
    let e = EMPTY as usize;
    let occ_pred: usize = (0..NUM_CLASSES).filter(|&p| p != e).map(|p| confusion[p].iter().sum::<usize>()).sum();
    let occ_gt: usize = (0..NUM_CLASSES)
        .filter(|&g| g != e)
        .map(|g| (0..NUM_CLASSES).map(|p| confusion[p][g]).sum::<usize>())
        .sum();
    let occ_both: usize = (0..NUM_CLASSES)
        .filter(|&p| p != e)
        .map(|p| (0..NUM_CLASSES).filter(|&g| g != e).map(|g| confusion[p][g]).sum::<usize>())
        .sum();
    let iou = jaccard(occ_both, occ_pred + occ_gt - occ_both);

    let mut per_class_iou = [None; NUM_SEMANTIC];
    let mut sum = 0.0;
    let mut valid = 0usize;
    for c in 1..NUM_CLASSES {
        let tp = confusion[c][c];
        let np: usize = confusion[c].iter().sum();
        let ng: usize = (0..NUM_CLASSES).map(|p| confusion[p][c]).sum();
        if np == 0 && ng == 0 {
            continue;
        }
        let v = jaccard(tp, np + ng - tp);
        per_class_iou[c - 1] = Some(v);
        sum += v;
        valid += 1;
    }
    let miou = if valid == 0 { 1.0 } else { sum / valid as f64 };
    Ok(ScoreReport {
        iou,
        per_class_iou,
        miou,
        voxel_count: n,
    })
}

/// Frame lists of the look-back protocol: `[0..k)` and `[0..k, 0..k)`.
pub fn lookback_frame_lists(k: usize) -> (Vec<usize>, Vec<usize>) {
    let first: Vec<usize> = (0..k).collect();
    let back = first.iter().chain(&first).copied().collect();
    (first, back)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookbackReport {
    pub k: usize,
    pub first_frames: Vec<usize>,
    pub look_back_frames: Vec<usize>,
    pub first_time: ScoreReport,
    pub look_back: ScoreReport,
}

impl LookbackReport {
    pub fn to_json(&self) -> Value {
        json!({
            "k": self.k,
            "first_time": { "frames": self.first_frames, "score": self.first_time.to_json() },
            "look_back": { "frames": self.look_back_frames, "score": self.look_back.to_json() },
        })
    }
}

/// Runs `runner` on fresh memory over `[0..k)` and over `[0..k, 0..k)` and
/// scores both global grids against the union of the `k` frame masks.
///
/// `runner(scene, frames)` must return the global grid after processing
/// `frames` in order, starting from a fresh memory.
pub fn lookback_eval<F>(runner: F, scene: &GlobalScene, k: usize) -> Result<LookbackReport>
where
    F: Fn(&GlobalScene, &[usize]) -> Result<VoxelGrid>,
{
    if k == 0 || k > scene.frames.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {k} must lie in 1..={}",
            scene.frames.len()
        )));
    }
    let (first_frames, look_back_frames) = lookback_frame_lists(k);
    let masks = frame_masks(&scene.grid, &scene.frames[..k])?;
    let union = splice_masks(&masks)?;
    let first = runner(scene, &first_frames)?;
    let back = runner(scene, &look_back_frames)?;
    Ok(LookbackReport {
        k,
        first_time: score(&first, &scene.grid, &union)?,
        look_back: score(&back, &scene.grid, &union)?,
        first_frames,
        look_back_frames,
    })
}
