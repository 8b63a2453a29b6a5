//! Runs a few frames, snapshots the memory, reloads it and writes a PLY
//! point file with one vertex per Gaussian.

use occmem::cli::ply_text;
use occmem::dataset::{gen_synthetic_scene, gen_trajectory, SceneParams, TrajectoryParams};
use occmem::pipeline::{restore, run_frames, snapshot};
use occmem::RunConfig;

fn main() -> occmem::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "memory".into());
    let seed = 0;
    let mut scene = gen_synthetic_scene(seed, &SceneParams::default())?;
    scene.frames = gen_trajectory(&scene, seed, &TrajectoryParams::default())?;
    scene.render_all();

    let cfg = RunConfig::default();
    let (_, state) = run_frames(&scene, &[0, 1, 2, 3, 4], &cfg, &cfg.oracle_refiner())?;
    let gmem = format!("{out}.gmem");
    snapshot(&state.memory, &gmem)?;
    let back = restore(&gmem)?;
    println!("{gmem}: {} Gaussians, {} tagged", back.len(), back.tagged_count());

    let ply = format!("{out}.ply");
    std::fs::write(&ply, ply_text(&back, &cfg.gaussian))?;
    println!("{ply} written");
    Ok(())
}
