use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{local_box_for_frame, splice_masks, visibility_mask, CameraFrame, GlobalScene};
use crate::classes::EMPTY;
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose, Vec3};
use crate::grid::{VoxelGrid, VoxelMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub n_frames: usize,
    /// Camera height range (m).
    pub height: [f64; 2],
    /// Downward tilt range (degrees).
    pub pitch_deg: [f64; 2],
    /// Radius of the loop the camera walks around the room center (m).
    pub radius: f64,
    /// Fraction of each frame's mask the next frame must re-observe.
    pub min_overlap: f64,
    /// Fraction of occupied voxels the union of all masks must cover.
    pub min_coverage: f64,
    pub max_attempts: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            n_frames: 30,
            height: [1.2, 1.6],
            pitch_deg: [12.0, 24.0],
            radius: 0.7,
            min_overlap: 0.2,
            min_coverage: 0.5,
            max_attempts: 64,
        }
    }
}

/// True when the voxels around `p` (one voxel in every direction) are empty.
fn has_clearance(grid: &VoxelGrid, p: &Vec3) -> bool {
    let Some([x, y, z]) = grid.geometry.voxel_of(p) else {
        return false;
    };
    let d = grid.geometry.dims;
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let q = [x as i64 + dx, y as i64 + dy, z as i64 + dz];
                if (0..3).any(|a| q[a] < 0 || q[a] >= d[a] as i64) {
                    return false;
                }
                if grid.get(q[0] as usize, q[1] as usize, q[2] as usize) != EMPTY {
                    return false;
                }
            }
        }
    }
    true
}

fn occupied_coverage(grid: &VoxelGrid, union: &VoxelMask) -> f64 {
    let (mut occ, mut hit) = (0usize, 0usize);
    for (l, &m) in grid.labels.iter().zip(&union.bits) {
        if *l != EMPTY {
            occ += 1;
            hit += m as usize;
        }
    }
    if occ == 0 {
        0.0
    } else {
        hit as f64 / occ as f64
    }
}

fn try_loop(grid: &VoxelGrid, rng: &mut ChaCha8Rng, p: &TrajectoryParams) -> Option<Vec<CameraFrame>> {
    let g = &grid.geometry;
    let lo = g.min_corner();
    let hi = g.max_corner();
    let center = (lo + hi) * 0.5;
    let phase = rng.random_range(0.0..TAU);
    let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut frames = Vec::with_capacity(p.n_frames);
    for i in 0..p.n_frames {
        let phi = phase + dir * TAU * i as f64 / p.n_frames as f64;
        let mut placed = None;
        for _ in 0..20 {
            let r = p.radius * rng.random_range(0.8..1.2);
            let pos = Vec3::new(
                center.x + r * phi.cos(),
                center.y + r * phi.sin(),
                rng.random_range(p.height[0]..=p.height[1]),
            );
            if has_clearance(grid, &pos) {
                placed = Some(pos);
                break;
            }
        }
        let pos = placed?;
        // look across the room, roughly through its center
        let yaw = phi + PI + rng.random_range(-0.25..0.25);
        let pitch = rng.random_range(p.pitch_deg[0]..=p.pitch_deg[1]).to_radians();
        frames.push(CameraFrame::new(
            Intrinsics::default(),
            Pose::from_yaw_pitch(pos, yaw, pitch),
        ));
    }
    Some(frames)
}

/// Frame masks of a trajectory over `grid`.
pub fn frame_masks(grid: &VoxelGrid, frames: &[CameraFrame]) -> Result<Vec<VoxelMask>> {
    frames
        .iter()
        .map(|f| visibility_mask(f, &local_box_for_frame(f, &grid.geometry), &grid.geometry))
        .collect()
}

/// Camera loop around the room center looking across the room. Candidate
/// loops whose consecutive frames overlap too little, or whose masks cover
/// too little of the occupied space, are rejected and redrawn.
pub fn gen_trajectory(scene: &GlobalScene, seed: u64, params: &TrajectoryParams) -> Result<Vec<CameraFrame>> {
    if params.n_frames == 0 {
        return Err(Error::InvalidConfig("n_frames must be positive".into()));
    }
    let grid = &scene.grid;
    let mut last_reason = String::from("no attempts");
    for attempt in 0..params.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9).wrapping_add(attempt as u64));
        let Some(frames) = try_loop(grid, &mut rng, params) else {
            last_reason = "no empty camera placement".into();
            continue;
        };
        let masks = frame_masks(grid, &frames)?;
        let overlap_ok = masks.windows(2).all(|w| {
            let shared = w[0].bits.iter().zip(&w[1].bits).filter(|(a, b)| **a && **b).count();
            shared as f64 >= params.min_overlap * w[0].count() as f64
        });
        if !overlap_ok {
            last_reason = "consecutive frames overlap too little".into();
            continue;
        }
        let coverage = occupied_coverage(grid, &splice_masks(&masks)?);
        if coverage < params.min_coverage {
            last_reason = format!("coverage {coverage:.3} below {}", params.min_coverage);
            continue;
        }
        return Ok(frames);
    }
    Err(Error::NoValidPlacement(last_reason))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic_scene, SceneParams};

    #[test]
    fn poses_in_empty_space_and_deterministic() {
        let scene = gen_synthetic_scene(2, &SceneParams::default()).unwrap();
        let p = TrajectoryParams::default();
        let a = gen_trajectory(&scene, 2, &p).unwrap();
        let b = gen_trajectory(&scene, 2, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        for f in &a {
            assert_eq!(scene.grid.label_at(&f.pose.center()), EMPTY);
            let z = f.pose.center().z;
            assert!((1.2..=1.6).contains(&z));
        }
    }

    #[test]
    fn coverage_and_overlap_hold_for_seeds() {
        let p = TrajectoryParams::default();
        for seed in 0..10 {
            let scene = gen_synthetic_scene(seed, &SceneParams::default()).unwrap();
            let frames = gen_trajectory(&scene, seed, &p).unwrap();
            let masks = frame_masks(&scene.grid, &frames).unwrap();
            let cov = occupied_coverage(&scene.grid, &splice_masks(&masks).unwrap());
            assert!(cov >= 0.5, "seed {seed}: coverage {cov}");
            for w in masks.windows(2) {
                let shared = w[0].bits.iter().zip(&w[1].bits).filter(|(a, b)| **a && **b).count();
                assert!(shared as f64 >= 0.2 * w[0].count() as f64);
            }
        }
    }

    #[test]
    fn impossible_placement_errors() {
        let mut scene = gen_synthetic_scene(0, &SceneParams::default()).unwrap();
        scene.grid.labels.iter_mut().for_each(|l| *l = crate::classes::WALL);
        let p = TrajectoryParams {
            max_attempts: 3,
            ..Default::default()
        };
        assert!(matches!(gen_trajectory(&scene, 0, &p), Err(Error::NoValidPlacement(_))));
    }
}
