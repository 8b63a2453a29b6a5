use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GlobalScene;
use crate::classes::{BED, CEILING, CHAIR, EMPTY, FLOOR, FURNITURE, OBJECTS, SOFA, TABLE, WALL};
use crate::error::{Error, Result};
use crate::grid::{GridGeometry, VoxelGrid, VOXEL_SIZE};

/// Smallest room the generator accepts (m).
pub const MIN_EXTENT: [f64; 3] = [3.0, 3.0, 2.5];

/// Radius around the room center kept free of furniture so the camera path
/// has room to move (m).
const CLEAR_RADIUS: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub extent: [f64; 3],
    pub min_objects: usize,
    pub max_objects: usize,
    /// Furniture as open-bottomed surface shells (like a voxelized mesh)
    /// rather than solid blocks.
    pub hollow_objects: bool,
    /// Push every object flush against one of the walls.
    pub against_walls: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            extent: [5.6, 4.8, 3.04],
            min_objects: 3,
            max_objects: 8,
            hollow_objects: true,
            against_walls: true,
        }
    }
}

/// Footprint ranges (w, d) and height range per furniture class (m).
const TEMPLATES: [(u8, [f64; 2], [f64; 2], [f64; 2]); 6] = [
    (BED, [1.2, 1.6], [1.6, 2.0], [0.4, 0.56]),
    (SOFA, [0.7, 0.9], [1.4, 2.0], [0.4, 0.64]),
    (TABLE, [0.6, 0.9], [0.8, 1.4], [0.4, 0.56]),
    (CHAIR, [0.4, 0.56], [0.4, 0.56], [0.4, 0.48]),
    (FURNITURE, [0.4, 0.6], [0.8, 1.2], [0.48, 0.8]),
    (OBJECTS, [0.24, 0.48], [0.24, 0.48], [0.16, 0.32]),
];

/// Half-open voxel ranges of one placed object.
#[derive(Debug, Clone, Copy)]
struct Placed {
    lo: [usize; 3],
    hi: [usize; 3],
}

impl Placed {
    fn overlaps(&self, other: &Placed, gap: usize) -> bool {
        (0..2).all(|a| self.lo[a] < other.hi[a] + gap && other.lo[a] < self.hi[a] + gap)
    }
}

/// Builds a room: floor at z = 0, walls on the four sides, a ceiling on the
/// top layer and 3–8 non-overlapping axis-aligned furniture boxes.
pub fn gen_synthetic_scene(seed: u64, params: &SceneParams) -> Result<GlobalScene> {
    let e = params.extent;
    if (0..3).any(|a| !(e[a] >= MIN_EXTENT[a])) {
        return Err(Error::SceneTooSmall(format!(
            "extent {e:?} is below the minimum {MIN_EXTENT:?}"
        )));
    }
    if params.min_objects > params.max_objects {
        return Err(Error::InvalidConfig("min_objects > max_objects".into()));
    }
    let dims = e.map(|v| (v / VOXEL_SIZE - 1e-9).ceil() as usize);
    let geometry = GridGeometry::new([0.0; 3], dims, VOXEL_SIZE)?;
    let mut grid = VoxelGrid::empty(geometry);
    let [nx, ny, nz] = dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let label = if z == 0 {
                    FLOOR
                } else if z == nz - 1 {
                    CEILING
                } else if x == 0 || y == 0 || x == nx - 1 || y == ny - 1 {
                    WALL
                } else {
                    continue;
                };
                grid.set(x, y, z, label);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce9_e5ce_9e00_0000);
    let target = rng.random_range(params.min_objects..=params.max_objects);
    let center = [nx as f64 * 0.5, ny as f64 * 0.5];
    let clear = CLEAR_RADIUS / VOXEL_SIZE;
    let mut placed: Vec<(Placed, u8)> = Vec::new();
    let mut attempts = 0;
    while placed.len() < target && attempts < 2000 {
        attempts += 1;
        let (class, wr, dr, hr) = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
        let mut w = rng.random_range(wr[0]..=wr[1]);
        let mut d = rng.random_range(dr[0]..=dr[1]);
        if rng.random_bool(0.5) {
            std::mem::swap(&mut w, &mut d);
        }
        let h = rng.random_range(hr[0]..=hr[1]);
        let size = [w, d, h].map(|v| ((v / VOXEL_SIZE).round() as usize).max(2));
        // Inside the walls, on the floor, below the ceiling.
        if size[0] + 2 >= nx || size[1] + 2 >= ny || size[2] + 2 >= nz {
            continue;
        }
        let mut x0 = rng.random_range(1..=nx - 1 - size[0]);
        let mut y0 = rng.random_range(1..=ny - 1 - size[1]);
        if params.against_walls {
            match rng.random_range(0..4) {
                0 => x0 = 1,
                1 => x0 = nx - 1 - size[0],
                2 => y0 = 1,
                _ => y0 = ny - 1 - size[1],
            }
        }
        let p = Placed {
            lo: [x0, y0, 0],
            hi: [x0 + size[0], y0 + size[1], size[2]],
        };
        // distance from the room center to the footprint rectangle
        let dx = (p.lo[0] as f64 - center[0]).max(center[0] - p.hi[0] as f64).max(0.0);
        let dy = (p.lo[1] as f64 - center[1]).max(center[1] - p.hi[1] as f64).max(0.0);
        if (dx * dx + dy * dy).sqrt() < clear {
            continue;
        }
        if placed.iter().any(|(q, _)| q.overlaps(&p, 2)) {
            continue;
        }
        placed.push((p, class));
    }
    if placed.len() < params.min_objects {
        return Err(Error::SceneTooSmall(format!(
            "could only place {} of {} objects",
            placed.len(),
            params.min_objects
        )));
    }
    for (p, class) in &placed {
        // faces pressed against a wall, and the wall behind them, are
        // never scanned
        let contact = [p.lo[0] == 1, p.hi[0] == nx - 1, p.lo[1] == 1, p.hi[1] == ny - 1];
        for z in p.lo[2]..p.hi[2] {
            for y in p.lo[1]..p.hi[1] {
                for x in p.lo[0]..p.hi[0] {
                    let faces = [x == p.lo[0], x + 1 == p.hi[0], y == p.lo[1], y + 1 == p.hi[1]];
                    let side = (0..4).any(|i| faces[i] && !(params.hollow_objects && contact[i]));
                    if side || z + 1 == p.hi[2] || !params.hollow_objects {
                        grid.set(x, y, z, *class);
                    } else {
                        grid.set(x, y, z, EMPTY);
                    }
                }
            }
        }
        if params.hollow_objects {
            for z in 1..p.hi[2] {
                for y in p.lo[1]..p.hi[1] {
                    for x in p.lo[0]..p.hi[0] {
                        for (i, q) in [(0, [0, y]), (1, [nx - 1, y]), (2, [x, 0]), (3, [x, ny - 1])] {
                            if contact[i] {
                                grid.set(q[0], q[1], z, EMPTY);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(GlobalScene {
        name: format!("synthetic_{seed:04}"),
        grid,
        frames: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::{EMPTY, NUM_CLASSES};

    #[test]
    fn floor_layer_is_floor_or_footprint() {
        let s = gen_synthetic_scene(3, &SceneParams::default()).unwrap();
        let g = &s.grid;
        let [nx, ny, _] = g.geometry.dims;
        let mut floor = 0;
        for y in 0..ny {
            for x in 0..nx {
                let l = g.get(x, y, 0);
                // under furniture the floor is unscanned
                assert!(l == FLOOR || l == EMPTY || l > FLOOR, "({x},{y}) = {l}");
                if l == FLOOR {
                    floor += 1;
                } else {
                    assert_ne!(g.get(x, y, 1), FLOOR);
                }
            }
        }
        assert!(floor as f64 > 0.7 * (nx * ny) as f64);
        assert_eq!(g.geometry.dims, [70, 60, 38]);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SceneParams::default();
        let a = gen_synthetic_scene(7, &p).unwrap();
        let b = gen_synthetic_scene(7, &p).unwrap();
        assert_eq!(a.grid, b.grid);
        let c = gen_synthetic_scene(8, &p).unwrap();
        assert_ne!(a.grid, c.grid);
    }

    #[test]
    fn histogram_has_four_classes_and_valid_labels() {
        for seed in 0..10 {
            let s = gen_synthetic_scene(seed, &SceneParams::default()).unwrap();
            let h = s.grid.histogram();
            let present = (1..NUM_CLASSES).filter(|&c| h[c] > 0).count();
            assert!(present >= 4, "seed {seed}: {h:?}");
            assert!(h[EMPTY as usize] > 0);
        }
    }

    #[test]
    fn too_small_rejected() {
        let p = SceneParams {
            extent: [2.0, 4.0, 3.0],
            ..Default::default()
        };
        assert!(matches!(gen_synthetic_scene(0, &p), Err(Error::SceneTooSmall(_))));
    }

    #[test]
    fn solid_objects_fill_interiors() {
        let hollow = gen_synthetic_scene(1, &SceneParams::default()).unwrap();
        let solid = gen_synthetic_scene(
            1,
            &SceneParams {
                hollow_objects: false,
                ..Default::default()
            },
        )
        .unwrap();
        let occ = |g: &VoxelGrid| g.labels.iter().filter(|&&l| l != EMPTY).count();
        assert!(occ(&solid.grid) > occ(&hollow.grid));
    }
}
