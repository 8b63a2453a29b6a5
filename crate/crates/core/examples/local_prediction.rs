//! Local prediction for every frame of one scene: fresh Gaussians in the
//! frame's local box, refined against the rendered observation, splatted
//! and scored under the frame mask.

use occmem::dataset::{gen_synthetic_scene, gen_trajectory, SceneParams, TrajectoryParams};
use occmem::pipeline::{run_local, score_local};
use occmem::RunConfig;

fn main() -> occmem::Result<()> {
    let seed = 7;
    let mut scene = gen_synthetic_scene(seed, &SceneParams::default())?;
    scene.frames = gen_trajectory(&scene, seed, &TrajectoryParams::default())?;
    scene.render_all();

    let cfg = RunConfig::default();
    let refiner = cfg.oracle_refiner();
    for (i, f) in scene.frames.iter().enumerate() {
        let pred = run_local(f, &scene.grid.geometry, &cfg, &refiner)?;
        let s = score_local(&pred, f, &scene.grid)?;
        println!("frame {i:2}: IoU {:.3}  mIoU {:.3}  ({} voxels)", s.iou, s.miou, s.voxel_count);
    }
    Ok(())
}
