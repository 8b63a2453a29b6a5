//! Ray-casts one frame and prints depth and class statistics of the image.

use occmem::classes::{CLASS_NAMES, NUM_CLASSES};
use occmem::dataset::{gen_synthetic_scene, gen_trajectory, raycast_render, SceneParams, TrajectoryParams};

fn main() -> occmem::Result<()> {
    let frame: usize = std::env::args().nth(1).map(|s| s.parse().expect("frame")).unwrap_or(0);
    let scene = gen_synthetic_scene(1, &SceneParams::default())?;
    let frames = gen_trajectory(&scene, 1, &TrajectoryParams::default())?;
    let obs = raycast_render(&scene.grid, &frames[frame]);

    let hits: Vec<f32> = obs.depth.iter().copied().filter(|&d| d > 0.0).collect();
    let (lo, hi) = hits.iter().fold((f32::MAX, 0.0f32), |(a, b), &d| (a.min(d), b.max(d)));
    println!("frame {frame}: {} of {} pixels hit, depth {lo:.2}..{hi:.2} m", hits.len(), obs.depth.len());

    let mut counts = [0usize; NUM_CLASSES];
    for &c in &obs.semantics {
        counts[c as usize] += 1;
    }
    for (c, n) in counts.iter().enumerate().filter(|(_, n)| **n > 0) {
        println!("  {:<10} {:5.1}%", CLASS_NAMES[c], 100.0 * *n as f64 / obs.semantics.len() as f64);
    }
    Ok(())
}
