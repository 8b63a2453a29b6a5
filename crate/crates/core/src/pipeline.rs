//! Local prediction and the embodied recurrence over a Gaussian memory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{local_box_for_frame, splice_masks, visibility_mask, CameraFrame, GlobalScene};
use crate::error::{Error, Result};
use crate::gaussian::{
    init_memory_uniform, to_camera_frame, to_world_frame, Aabb, GaussianConfig, GaussianMemory,
    SemanticGaussian,
};
use crate::geometry::{Vec3, Z_FAR, Z_NEAR};
use crate::grid::{GridGeometry, VoxelGrid, VoxelMask};
use crate::metrics::{score, ScoreReport};
use crate::refine::{
    refine_frustum, ConfidenceSchedule, Observation, OracleParams, OracleRefiner, Refiner,
};
use crate::snapshot;
use crate::splat::{labels_from_volume, splat, DEFAULT_CUTOFF_SIGMAS, DEFAULT_TAU_EMPTY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub gaussian: GaussianConfig,
    pub schedule: ConfidenceSchedule,
    pub oracle: OracleParams,
    pub cutoff_sigmas: f64,
    pub tau_empty: f64,
    pub seed: u64,
    /// Frame indices to process in order; `None` means every frame once.
    pub frames: Option<Vec<usize>>,
    /// Read the global grid out of tagged Gaussians only.
    pub only_tagged: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gaussian: GaussianConfig::default(),
            schedule: ConfidenceSchedule::default(),
            oracle: OracleParams::default(),
            cutoff_sigmas: DEFAULT_CUTOFF_SIGMAS,
            tau_empty: DEFAULT_TAU_EMPTY,
            seed: 0,
            frames: None,
            only_tagged: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.gaussian.validate()?;
        self.schedule.validate()?;
        if !(self.cutoff_sigmas > 0.0) {
            return Err(Error::InvalidConfig("cutoff_sigmas must be positive".into()));
        }
        if !(self.tau_empty >= 0.0) {
            return Err(Error::InvalidConfig("tau_empty must be non-negative".into()));
        }
        Ok(())
    }

    pub fn oracle_refiner(&self) -> OracleRefiner {
        OracleRefiner::new(self.oracle, self.gaussian)
    }

    /// Frames to process for a scene with `n` frames.
    pub fn frame_list(&self, n: usize) -> Result<Vec<usize>> {
        let frames = self.frames.clone().unwrap_or_else(|| (0..n).collect());
        if let Some(&bad) = frames.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        Ok(frames)
    }
}

fn observation_of(frame: &CameraFrame) -> Result<&Observation> {
    frame
        .observation
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("frame has no rendered observation".into()))
}

/// World-frame prior Gaussians filling `geom` on a regular lattice with
/// about `count` sites.
pub fn local_gaussians(geom: &GridGeometry, cfg: &GaussianConfig, count: usize) -> Vec<SemanticGaussian> {
    let lo = geom.min_corner();
    let ext = geom.max_corner() - lo;
    let volume = ext.x * ext.y * ext.z;
    let h = (volume / count.max(1) as f64).cbrt();
    let dims = [0, 1, 2].map(|a| ((ext[a] / h).round() as usize).max(1));
    let step = [0, 1, 2].map(|a| ext[a] / dims[a] as f64);
    let mut out = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let p = Vec3::new(
                    lo.x + (x as f64 + 0.5) * step[0],
                    lo.y + (y as f64 + 0.5) * step[1],
                    lo.z + (z as f64 + 0.5) * step[2],
                );
                out.push(cfg.prior_gaussian(p));
            }
        }
    }
    out
}

/// Local prediction for one frame over its local box, from freshly
/// initialized camera-frame Gaussians.
pub fn run_local(
    frame: &CameraFrame,
    scene: &GridGeometry,
    cfg: &RunConfig,
    refiner: &dyn Refiner,
) -> Result<VoxelGrid> {
    cfg.validate()?;
    let obs = observation_of(frame)?;
    let geom = local_box_for_frame(frame, scene).geometry(scene.voxel_size);
    let view: Vec<SemanticGaussian> = local_gaussians(&geom, &cfg.gaussian, cfg.gaussian.local_count)
        .iter()
        .map(|g| to_camera_frame(g, &frame.pose))
        .collect();
    let fresh = ConfidenceSchedule::uniform(cfg.schedule.stages(), 0.0);
    let tags = vec![false; view.len()];
    let refined = refine_frustum(&view, &tags, obs, &fresh, refiner)?;
    let world: Vec<SemanticGaussian> = refined.iter().map(|g| to_world_frame(g, &frame.pose)).collect();
    let vol = splat(&world, &cfg.gaussian, &geom, cfg.cutoff_sigmas)?;
    Ok(labels_from_volume(&vol, cfg.tau_empty))
}

/// Scores a local prediction against the ground truth under the frame's
/// visibility mask.
pub fn score_local(pred: &VoxelGrid, frame: &CameraFrame, gt: &VoxelGrid) -> Result<ScoreReport> {
    let scene = &gt.geometry;
    let mask = visibility_mask(frame, &local_box_for_frame(frame, scene), scene)?;
    score(pred, &gt.crop(&pred.geometry)?, &mask.crop(&pred.geometry)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodiedState {
    pub memory: GaussianMemory,
    pub scene: GridGeometry,
    pub processed_masks: Vec<VoxelMask>,
    pub frame_cursor: usize,
}

impl EmbodiedState {
    /// Fresh memory filling the scene grid's bounds.
    pub fn new(scene: &GridGeometry, cfg: &GaussianConfig) -> Result<Self> {
        let lo = scene.min_corner();
        let hi = scene.max_corner();
        let bounds = Aabb::new([lo.x, lo.y, lo.z], [hi.x, hi.y, hi.z]);
        Ok(Self {
            memory: init_memory_uniform(&bounds, cfg)?,
            scene: *scene,
            processed_masks: Vec::new(),
            frame_cursor: 0,
        })
    }

    /// Union of the masks of every processed frame.
    pub fn explored(&self) -> Result<VoxelMask> {
        if self.processed_masks.is_empty() {
            return Ok(VoxelMask::new(self.scene));
        }
        splice_masks(&self.processed_masks)
    }

    /// Global read-out of the memory.
    pub fn read_out(&self, cfg: &RunConfig) -> Result<VoxelGrid> {
        let vol = if cfg.only_tagged {
            let tagged: Vec<SemanticGaussian> =
                self.memory.gaussians.iter().filter(|g| g.tag).copied().collect();
            splat(&tagged, &cfg.gaussian, &self.scene, cfg.cutoff_sigmas)?
        } else {
            splat(&self.memory.gaussians, &cfg.gaussian, &self.scene, cfg.cutoff_sigmas)?
        };
        Ok(labels_from_volume(&vol, cfg.tau_empty))
    }
}

/// Refines the memory Gaussians inside the frame's frustum, writes them back
/// and records the frame's mask. Does not read the memory out.
pub fn update_memory(
    state: &mut EmbodiedState,
    frame: &CameraFrame,
    cfg: &RunConfig,
    refiner: &dyn Refiner,
) -> Result<()> {
    let obs = observation_of(frame)?;
    let sel = state.memory.select_frustum(&frame.pose, &frame.intrinsics, Z_NEAR, Z_FAR);
    let tags: Vec<bool> = sel.indices.iter().map(|&i| state.memory.gaussians[i].tag).collect();
    let refined = refine_frustum(&sel.view, &tags, obs, &cfg.schedule, refiner)?;
    state.memory.write_back(&sel.indices, &refined, &frame.pose)?;
    let scene = state.scene;
    state
        .processed_masks
        .push(visibility_mask(frame, &local_box_for_frame(frame, &scene), &scene)?);
    state.frame_cursor += 1;
    Ok(())
}

/// One step of the recurrence; returns the global grid afterwards.
pub fn run_embodied_step(
    state: &mut EmbodiedState,
    frame: &CameraFrame,
    cfg: &RunConfig,
    refiner: &dyn Refiner,
) -> Result<VoxelGrid> {
    cfg.validate()?;
    update_memory(state, frame, cfg, refiner)?;
    state.read_out(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub frame: usize,
    pub score: ScoreReport,
}

impl StepReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "step": self.step, "frame": self.frame, "score": self.score.to_json() })
    }
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub grid: VoxelGrid,
    pub steps: Vec<StepReport>,
    pub state: EmbodiedState,
}

/// Folds [`run_embodied_step`] over `frames` on a fresh memory without
/// scoring; returns the final grid and state.
pub fn run_frames(
    scene: &GlobalScene,
    frames: &[usize],
    cfg: &RunConfig,
    refiner: &dyn Refiner,
) -> Result<(VoxelGrid, EmbodiedState)> {
    cfg.validate()?;
    let mut state = EmbodiedState::new(&scene.grid.geometry, &cfg.gaussian)?;
    for &i in frames {
        let frame = scene
            .frames
            .get(i)
            .ok_or(Error::IndexOutOfRange { index: i, len: scene.frames.len() })?;
        update_memory(&mut state, frame, cfg, refiner)?;
    }
    let grid = state.read_out(cfg)?;
    Ok((grid, state))
}

/// Full embodied run with a score after every step, against the ground
/// truth under the union of the masks processed so far.
pub fn run_sequence(scene: &GlobalScene, cfg: &RunConfig, refiner: &dyn Refiner) -> Result<SequenceResult> {
    run_sequence_with(scene, cfg, refiner, |_, _, _| Ok(()))
}

/// [`run_sequence`] with a callback after each step receiving the step
/// report, the grid and the state.
pub fn run_sequence_with<F>(
    scene: &GlobalScene,
    cfg: &RunConfig,
    refiner: &dyn Refiner,
    mut on_step: F,
) -> Result<SequenceResult>
where
    F: FnMut(&StepReport, &VoxelGrid, &EmbodiedState) -> Result<()>,
{
    cfg.validate()?;
    let frames = cfg.frame_list(scene.frames.len())?;
    if frames.is_empty() {
        return Err(Error::InvalidConfig("no frames to process".into()));
    }
    let mut state = EmbodiedState::new(&scene.grid.geometry, &cfg.gaussian)?;
    let mut steps = Vec::with_capacity(frames.len());
    let mut grid = VoxelGrid::empty(scene.grid.geometry);
    for (step, &i) in frames.iter().enumerate() {
        let frame = &scene.frames[i];
        grid = run_embodied_step(&mut state, frame, cfg, refiner)?;
        let report = StepReport {
            step,
            frame: i,
            score: score(&grid, &scene.grid, &state.explored()?)?,
        };
        on_step(&report, &grid, &state)?;
        steps.push(report);
    }
    Ok(SequenceResult { grid, steps, state })
}

pub fn snapshot(memory: &GaussianMemory, path: impl AsRef<Path>) -> Result<()> {
    snapshot::save(memory, path)
}

pub fn restore(path: impl AsRef<Path>) -> Result<GaussianMemory> {
    snapshot::load(path)
}
