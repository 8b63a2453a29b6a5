//! Generates a synthetic room with its camera loop and writes the scene
//! directory.
//!
//!     cargo run --release --example gen_scene -- 4 /tmp/room4

use occmem::dataset::{gen_synthetic_scene, gen_trajectory, save_scene_dir, SceneParams, TrajectoryParams};

fn main() -> occmem::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(0);
    let out = args.next().unwrap_or_else(|| format!("room_{seed}"));

    let mut scene = gen_synthetic_scene(seed, &SceneParams::default())?;
    scene.frames = gen_trajectory(&scene, seed, &TrajectoryParams::default())?;
    save_scene_dir(&scene, &out, Some(seed))?;

    let hist = scene.grid.histogram();
    println!("{} -> {out}", scene.name);
    println!("dims {:?}, {} frames", scene.grid.geometry.dims, scene.frames.len());
    for (name, n) in occmem::classes::CLASS_NAMES.iter().zip(hist) {
        if n > 0 {
            println!("  {name:<10} {n}");
        }
    }
    Ok(())
}
