//! First-time against look-back evaluation: the first k frames once, then
//! the same frames twice, both scored over the union of their masks.

use occmem::dataset::{gen_synthetic_scene, gen_trajectory, SceneParams, TrajectoryParams};
use occmem::metrics::lookback_eval;
use occmem::pipeline::run_frames;
use occmem::RunConfig;

fn main() -> occmem::Result<()> {
    let seed = 2;
    let mut scene = gen_synthetic_scene(seed, &SceneParams::default())?;
    scene.frames = gen_trajectory(&scene, seed, &TrajectoryParams::default())?;
    scene.render_all();

    let cfg = RunConfig::default();
    let refiner = cfg.oracle_refiner();
    for k in [3, 5, 8] {
        let r = lookback_eval(|s, frames| run_frames(s, frames, &cfg, &refiner).map(|x| x.0), &scene, k)?;
        println!(
            "k = {k}: first mIoU {:.3}, look-back mIoU {:.3} ({:+.4})",
            r.first_time.miou,
            r.look_back.miou,
            r.look_back.miou - r.first_time.miou
        );
    }
    Ok(())
}
