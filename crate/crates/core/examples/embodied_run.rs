//! Embodied run: one memory for the whole room, updated frame by frame and
//! scored over everything explored so far.

use occmem::classes::CLASS_NAMES;
use occmem::dataset::{gen_synthetic_scene, gen_trajectory, SceneParams, TrajectoryParams};
use occmem::pipeline::run_sequence;
use occmem::RunConfig;

fn main() -> occmem::Result<()> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().expect("seed")).unwrap_or(3);
    let mut scene = gen_synthetic_scene(seed, &SceneParams::default())?;
    scene.frames = gen_trajectory(&scene, seed, &TrajectoryParams::default())?;
    scene.render_all();

    let cfg = RunConfig::default();
    let res = run_sequence(&scene, &cfg, &cfg.oracle_refiner())?;
    for s in &res.steps {
        println!("step {:2} frame {:2}: IoU {:.3} mIoU {:.3}", s.step, s.frame, s.score.iou, s.score.miou);
    }
    let last = &res.steps.last().expect("at least one step").score;
    println!("per class at the end:");
    for (c, v) in last.per_class_iou.iter().enumerate() {
        if let Some(v) = v {
            println!("  {:<10} {v:.3}", CLASS_NAMES[c + 1]);
        }
    }
    println!("{} of {} Gaussians tagged", res.state.memory.tagged_count(), res.state.memory.len());
    Ok(())
}
