//! Synthetic scenes, camera trajectories, ray-cast observations, visibility
//! masks and the on-disk scene directory.

mod io;
mod knn;
mod mask;
mod render;
mod scene;
mod trajectory;

pub use io::{
    depth_file, frame_file, load_mask, load_scene_dir, mask_file, save_observation, save_scene_dir,
    sem_file, FrameRecord, SceneManifest, GLOBAL_GRID, MANIFEST,
};
pub use knn::{knn_label_transfer, KNN_D_MAX};
pub use mask::{
    local_box_for_frame, splice_masks, visibility_mask, visibility_mask_bruteforce, LocalBox,
    LOCAL_DIMS,
};
pub use render::{cast_ray, raycast_render, RayHit, RENDER_Z_FAR};
pub use scene::{gen_synthetic_scene, SceneParams, MIN_EXTENT};
pub use trajectory::{frame_masks, gen_trajectory, TrajectoryParams};

use crate::geometry::{Intrinsics, Pose};
use crate::grid::VoxelGrid;
use crate::refine::Observation;

/// One posed camera frame, optionally with its rendered observation.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub intrinsics: Intrinsics,
    pub pose: Pose,
    pub observation: Option<Observation>,
}

impl CameraFrame {
    pub fn new(intrinsics: Intrinsics, pose: Pose) -> Self {
        Self {
            intrinsics,
            pose,
            observation: None,
        }
    }
}

/// Ground-truth grid plus the frames exploring it.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalScene {
    pub name: String,
    pub grid: VoxelGrid,
    pub frames: Vec<CameraFrame>,
}

impl GlobalScene {
    /// Renders every frame that lacks an observation.
    pub fn render_all(&mut self) {
        let grid = &self.grid;
        for f in &mut self.frames {
            if f.observation.is_none() {
                f.observation = Some(raycast_render(grid, f));
            }
        }
    }

    pub fn is_rendered(&self) -> bool {
        self.frames.iter().all(|f| f.observation.is_some())
    }
}
