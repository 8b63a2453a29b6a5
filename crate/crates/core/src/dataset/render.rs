use rayon::prelude::*;

use super::CameraFrame;
use crate::classes::EMPTY;
use crate::geometry::Vec3;
use crate::grid::VoxelGrid;
use crate::refine::Observation;

/// Rays stop after this z-depth (m).
pub const RENDER_Z_FAR: f64 = 10.0;

/// First occupied voxel pierced by a ray. `t` is measured in units of the
/// ray direction, which for camera rays with unit z is the z-depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub voxel: [usize; 3],
    pub t_enter: f64,
    pub t_exit: f64,
    pub label: u8,
}

impl RayHit {
    /// Middle of the chord through the hit voxel; always inside the voxel.
    pub fn t_mid(&self) -> f64 {
        0.5 * (self.t_enter + self.t_exit)
    }

    /// Just past the entry point: at most 1 mm along the ray, never beyond
    /// the middle of the chord.
    pub fn t_surface(&self, dir: &Vec3) -> f64 {
        let nudge = (1e-3 / dir.norm()).min(0.5 * (self.t_exit - self.t_enter));
        self.t_enter + nudge
    }
}

/// Integer-stepping traversal (Amanatides–Woo) visiting every voxel the ray
/// `origin + t·dir` pierces, in order, until the first occupied voxel or
/// `t > t_max`.
pub fn cast_ray(grid: &VoxelGrid, origin: &Vec3, dir: &Vec3, t_max: f64) -> Option<RayHit> {
    let g = &grid.geometry;
    let lo = g.min_corner();
    let hi = g.max_corner();
    let h = g.voxel_size;

    // clip against the grid box
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for a in 0..3 {
        if dir[a] == 0.0 {
            if origin[a] < lo[a] || origin[a] > hi[a] {
                return None;
            }
        } else {
            let inv = 1.0 / dir[a];
            let (mut ta, mut tb) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
        }
    }
    if t0 > t1 {
        return None;
    }

    let start = origin + dir * t0;
    let mut idx = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_next = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for a in 0..3 {
        let n = g.dims[a] as i64;
        let f = ((start[a] - lo[a]) / h).floor() as i64;
        idx[a] = f.clamp(0, n - 1);
        if dir[a] > 0.0 {
            step[a] = 1;
            t_next[a] = (lo[a] + (idx[a] + 1) as f64 * h - origin[a]) / dir[a];
            t_delta[a] = h / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            t_next[a] = (lo[a] + idx[a] as f64 * h - origin[a]) / dir[a];
            t_delta[a] = -h / dir[a];
        }
    }

    let mut t_enter = t0;
    loop {
        if t_enter > t_max {
            return None;
        }
        let axis = if t_next[0] <= t_next[1] && t_next[0] <= t_next[2] {
            0
        } else if t_next[1] <= t_next[2] {
            1
        } else {
            2
        };
        let t_exit = t_next[axis].min(t1.max(t_enter));
        let voxel = [idx[0] as usize, idx[1] as usize, idx[2] as usize];
        let label = grid.get(voxel[0], voxel[1], voxel[2]);
        if label != EMPTY {
            return Some(RayHit {
                voxel,
                t_enter,
                t_exit,
                label,
            });
        }
        idx[axis] += step[axis];
        if idx[axis] < 0 || idx[axis] >= g.dims[axis] as i64 {
            return None;
        }
        t_enter = t_next[axis];
        t_next[axis] += t_delta[axis];
    }
}

/// Surface depth rounded to f32, falling back to the chord middle if the
/// rounding pushed the point out of the hit voxel.
fn surface_depth(grid: &VoxelGrid, hit: &RayHit, origin: &Vec3, dir: &Vec3) -> f32 {
    let d = hit.t_surface(dir) as f32;
    if grid.geometry.voxel_of(&(origin + dir * d as f64)) == Some(hit.voxel) {
        d
    } else {
        hit.t_mid() as f32
    }
}

/// Per-pixel depth and class from ray casting through the ground-truth grid.
/// Depth is the z-depth of the observed surface, taken just inside the
/// first occupied voxel so that it back-projects into that voxel; rays that hit nothing within [`RENDER_Z_FAR`] give depth
/// 0 and the empty class.
pub fn raycast_render(grid: &VoxelGrid, frame: &CameraFrame) -> crate::refine::Observation {
    let k = frame.intrinsics;
    let pose = frame.pose;
    let w = k.width;
    let origin = pose.center();
    let pixels: Vec<(f32, u8)> = (0..w * k.height)
        .into_par_iter()
        .map(|i| {
            let (px, py) = (i % w, i / w);
            let ray_cam = k.pixel_ray(px as f64 + 0.5, py as f64 + 0.5);
            let dir = pose.rotation * ray_cam;
            match cast_ray(grid, &origin, &dir, RENDER_Z_FAR) {
                Some(hit) => (surface_depth(grid, &hit, &origin, &dir), hit.label),
                None => (0.0, EMPTY),
            }
        })
        .collect();
    let (depth, semantics) = pixels.into_iter().unzip();
    Observation {
        depth,
        semantics,
        intrinsics: k,
        pose,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::WALL;
    use crate::geometry::{Intrinsics, Pose};
    use crate::grid::{GridGeometry, VOXEL_SIZE};

    fn wall_grid() -> VoxelGrid {
        // 2 m deep room with a wall slab at x in [2.0, 2.08)
        let g = GridGeometry::new([0.0, -1.6, -1.6], [30, 40, 40], VOXEL_SIZE).unwrap();
        let mut grid = VoxelGrid::empty(g);
        for z in 0..40 {
            for y in 0..40 {
                grid.set(25, y, z, WALL);
            }
        }
        grid
    }

    #[test]
    fn head_on_wall_depth() {
        let grid = wall_grid();
        // camera at x = 1.0 facing +x, wall face at x = 2.0
        let pose = Pose::from_yaw_pitch(Vec3::new(1.0, 0.0, 0.0), 0.0, 0.0);
        let frame = CameraFrame::new(Intrinsics::default(), pose);
        let obs = raycast_render(&grid, &frame);
        let center = obs.depth[240 * 640 + 320] as f64;
        assert!((center - 1.0).abs() <= 0.04 + 1e-6, "depth {center}");
        assert_eq!(obs.semantics[240 * 640 + 320], WALL);
    }

    #[test]
    fn ray_leaving_scene_has_no_depth() {
        let grid = wall_grid();
        let pose = Pose::from_yaw_pitch(Vec3::new(1.0, 0.0, 0.0), std::f64::consts::PI, 0.0);
        let obs = raycast_render(&grid, &CameraFrame::new(Intrinsics::default(), pose));
        assert!(obs.depth.iter().all(|&d| d == 0.0));
        assert!(obs.semantics.iter().all(|&s| s == EMPTY));
    }

    #[test]
    fn traversal_visits_only_empty_voxels_before_hit() {
        let grid = wall_grid();
        let origin = Vec3::new(0.5, 0.1, 0.2);
        let dir = Vec3::new(1.0, 0.37, -0.21);
        let hit = cast_ray(&grid, &origin, &dir, 100.0).unwrap();
        assert_eq!(hit.voxel[0], 25);
        let p = origin + dir * hit.t_mid();
        assert_eq!(grid.geometry.voxel_of(&p), Some(hit.voxel));
        // dense sampling before the entry point stays in empty space
        let n = 2000;
        for i in 0..n {
            let t = hit.t_enter * i as f64 / n as f64;
            assert_eq!(grid.label_at(&(origin + dir * t)), EMPTY);
        }
    }

    #[test]
    fn ray_from_outside_grid_enters() {
        let grid = wall_grid();
        let hit = cast_ray(&grid, &Vec3::new(-1.0, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0), 10.0).unwrap();
        assert!((hit.t_enter - 3.0).abs() < 1e-9);
        assert!(cast_ray(&grid, &Vec3::new(-1.0, 0.0, 0.0), &Vec3::new(1.0, 0.0, 0.0), 2.0).is_none());
    }
}
