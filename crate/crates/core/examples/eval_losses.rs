//! Scores and loss terms of a local prediction. The prediction's splatted
//! class distributions are compared with the ground truth under the frame
//! mask.

use occmem::dataset::{gen_synthetic_scene, gen_trajectory, local_box_for_frame, visibility_mask, SceneParams, TrajectoryParams};
use occmem::gaussian::to_world_frame;
use occmem::metrics::{focal_loss, lovasz_softmax, scal_loss, score, LossConfig, ScalMode};
use occmem::pipeline::local_gaussians;
use occmem::refine::refine_frustum;
use occmem::splat::{labels_from_volume, splat};
use occmem::{gaussian::to_camera_frame, ConfidenceSchedule, RunConfig};

fn main() -> occmem::Result<()> {
    let seed = 5;
    let mut scene = gen_synthetic_scene(seed, &SceneParams::default())?;
    scene.frames = gen_trajectory(&scene, seed, &TrajectoryParams::default())?;
    scene.render_all();
    let frame = &scene.frames[10];
    let obs = frame.observation.as_ref().expect("rendered");

    let cfg = RunConfig::default();
    let lbox = local_box_for_frame(frame, &scene.grid.geometry);
    let geom = lbox.geometry(scene.grid.geometry.voxel_size);
    let view: Vec<_> = local_gaussians(&geom, &cfg.gaussian, cfg.gaussian.local_count)
        .iter()
        .map(|g| to_camera_frame(g, &frame.pose))
        .collect();
    let tags = vec![false; view.len()];
    let refined = refine_frustum(&view, &tags, obs, &ConfidenceSchedule::uniform(3, 0.0), &cfg.oracle_refiner())?;
    let world: Vec<_> = refined.iter().map(|g| to_world_frame(g, &frame.pose)).collect();
    let vol = splat(&world, &cfg.gaussian, &geom, cfg.cutoff_sigmas)?;

    let gt = scene.grid.crop(&geom)?;
    let mask = visibility_mask(frame, &lbox, &scene.grid.geometry)?.crop(&geom)?;
    let pred = labels_from_volume(&vol, cfg.tau_empty);
    let probs = vol.class_probs();

    let s = score(&pred, &gt, &mask)?;
    println!("IoU {:.3}  mIoU {:.3}", s.iou, s.miou);
    let lc = LossConfig::default();
    let (focal, _) = focal_loss(&probs, &gt.labels, &mask.bits, &lc)?;
    println!("focal    {focal:.4}");
    println!("lovasz   {:.4}", lovasz_softmax(&probs, &gt.labels, &mask.bits)?);
    println!("scal geo {:.4}", scal_loss(&probs, &gt.labels, &mask.bits, ScalMode::Geo)?);
    println!("scal sem {:.4}", scal_loss(&probs, &gt.labels, &mask.bits, ScalMode::Sem)?);
    Ok(())
}
