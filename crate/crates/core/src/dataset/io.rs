//! Scene directory layout:
//!
//! ```text
//! scene.json          manifest (name, extent, grid, frame list)
//! occ_global.occg     ground truth (OCCG1)
//! frame_%03d.json     intrinsics (row-major 3x3), camera-to-world pose (row-major 3x4), image size
//! depth_%03d.f32      little-endian f32 H×W, row-major (after `render`)
//! sem_%03d.u8         u8 H×W (after `render`)
//! mask_%03d.bin       bit-packed visibility mask over the global grid
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{local_box_for_frame, visibility_mask, CameraFrame, GlobalScene};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, Pose};
use crate::grid::{VoxelGrid, VoxelMask};
use crate::refine::Observation;

pub const MANIFEST: &str = "scene.json";
pub const GLOBAL_GRID: &str = "occ_global.occg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub name: String,
    pub extent: [f64; 3],
    pub dims: [usize; 3],
    pub voxel_size: f64,
    pub origin: [f64; 3],
    #[serde(default)]
    pub seed: Option<u64>,
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub intrinsics: [f64; 9],
    pub pose: [f64; 12],
    pub width: usize,
    pub height: usize,
}

impl FrameRecord {
    pub fn from_frame(f: &CameraFrame) -> Self {
        Self {
            intrinsics: f.intrinsics.matrix_row_major(),
            pose: f.pose.to_row_major(),
            width: f.intrinsics.width,
            height: f.intrinsics.height,
        }
    }

    pub fn to_frame(&self) -> Result<CameraFrame> {
        let k = self.intrinsics;
        if k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0 {
            return Err(Error::Malformed {
                what: "frame intrinsics",
                detail: "expected a skew-free pinhole matrix".into(),
            });
        }
        let intrinsics = Intrinsics::new(k[0], k[4], k[2], k[5], self.width, self.height)?;
        Ok(CameraFrame::new(intrinsics, Pose::from_row_major(&self.pose)?))
    }
}

pub fn frame_file(i: usize) -> String {
    format!("frame_{i:03}.json")
}
pub fn depth_file(i: usize) -> String {
    format!("depth_{i:03}.f32")
}
pub fn sem_file(i: usize) -> String {
    format!("sem_{i:03}.u8")
}
pub fn mask_file(i: usize) -> String {
    format!("mask_{i:03}.bin")
}

/// Writes the whole scene directory. Observations are written only for
/// frames that have one.
pub fn save_scene_dir(scene: &GlobalScene, dir: impl AsRef<Path>, seed: Option<u64>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let g = scene.grid.geometry;
    let extent = [0, 1, 2].map(|a| g.dims[a] as f64 * g.voxel_size);
    let manifest = SceneManifest {
        name: scene.name.clone(),
        extent,
        dims: g.dims,
        voxel_size: g.voxel_size,
        origin: g.origin,
        seed,
        frames: (0..scene.frames.len()).map(frame_file).collect(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    scene.grid.save(dir.join(GLOBAL_GRID))?;
    for (i, f) in scene.frames.iter().enumerate() {
        fs::write(dir.join(frame_file(i)), serde_json::to_string_pretty(&FrameRecord::from_frame(f))?)?;
        let mask = visibility_mask(f, &local_box_for_frame(f, &g), &g)?;
        mask.save(dir.join(mask_file(i)))?;
        if let Some(obs) = &f.observation {
            save_observation(obs, dir, i)?;
        }
    }
    Ok(())
}

pub fn save_observation(obs: &Observation, dir: &Path, i: usize) -> Result<()> {
    let depth: Vec<u8> = obs.depth.iter().flat_map(|d| d.to_le_bytes()).collect();
    fs::write(dir.join(depth_file(i)), depth)?;
    fs::write(dir.join(sem_file(i)), &obs.semantics)?;
    Ok(())
}

fn load_observation(frame: &CameraFrame, dir: &Path, i: usize) -> Result<Option<Observation>> {
    let (dp, sp) = (dir.join(depth_file(i)), dir.join(sem_file(i)));
    if !dp.exists() || !sp.exists() {
        return Ok(None);
    }
    let raw = fs::read(dp)?;
    let n = frame.intrinsics.width * frame.intrinsics.height;
    if raw.len() != 4 * n {
        return Err(Error::Truncated("depth image"));
    }
    let depth = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let sem = fs::read(sp)?;
    if sem.len() != n {
        return Err(Error::Truncated("semantic image"));
    }
    Observation::new(depth, sem, frame.intrinsics, frame.pose).map(Some)
}

/// Reads a scene directory, including any rendered observations.
pub fn load_scene_dir(dir: impl AsRef<Path>) -> Result<GlobalScene> {
    let dir = dir.as_ref();
    let manifest: SceneManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    let grid = VoxelGrid::load(dir.join(GLOBAL_GRID))?;
    if grid.geometry.dims != manifest.dims {
        return Err(Error::Malformed {
            what: "scene manifest",
            detail: format!("dims {:?} disagree with grid {:?}", manifest.dims, grid.geometry.dims),
        });
    }
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (i, name) in manifest.frames.iter().enumerate() {
        let rec: FrameRecord = serde_json::from_slice(&fs::read(dir.join(name))?)?;
        let mut frame = rec.to_frame()?;
        frame.observation = load_observation(&frame, dir, i)?;
        frames.push(frame);
    }
    Ok(GlobalScene {
        name: manifest.name,
        grid,
        frames,
    })
}

/// Reads the stored visibility mask of frame `i`.
pub fn load_mask(scene: &GlobalScene, dir: impl AsRef<Path>, i: usize) -> Result<VoxelMask> {
    VoxelMask::load(scene.grid.geometry, dir.as_ref().join(mask_file(i)))
}
