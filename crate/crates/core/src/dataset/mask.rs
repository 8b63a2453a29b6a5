use serde::{Deserialize, Serialize};

use super::CameraFrame;
use crate::error::{Error, Result};
use crate::geometry::{in_frustum, world_to_camera, in_frustum_cam, Z_FAR, Z_NEAR};
use crate::grid::{GridGeometry, VoxelMask};

/// Local prediction grid: 4.8 m × 4.8 m × 2.88 m at the scene voxel size.
pub const LOCAL_DIMS: [usize; 3] = [60, 60, 36];

/// How far ahead of the camera the box center sits (m).
const BOX_AHEAD: f64 = 2.4;

/// World-axis-aligned local box, snapped to the scene lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalBox {
    pub origin: [f64; 3],
    pub dims: [usize; 3],
}

impl LocalBox {
    pub fn geometry(&self, voxel_size: f64) -> GridGeometry {
        GridGeometry {
            origin: self.origin,
            dims: self.dims,
            voxel_size,
        }
    }
}

/// Box horizontally centered 2.4 m ahead of the camera along its heading,
/// resting on z = 0, snapped to the scene lattice and clamped inside the
/// scene where it fits.
pub fn local_box_for_frame(frame: &CameraFrame, scene: &GridGeometry) -> LocalBox {
    let h = scene.voxel_size;
    let f = frame.pose.forward();
    let horiz = (f.x * f.x + f.y * f.y).sqrt();
    let (hx, hy) = if horiz > 1e-12 {
        (f.x / horiz, f.y / horiz)
    } else {
        (1.0, 0.0)
    };
    let c = frame.pose.center();
    let center = [c.x + BOX_AHEAD * hx, c.y + BOX_AHEAD * hy];
    let mut origin = [0.0; 3];
    for a in 0..2 {
        let half = LOCAL_DIMS[a] as f64 * h * 0.5;
        let cells = ((center[a] - half - scene.origin[a]) / h).round() as i64;
        let max_cells = scene.dims[a] as i64 - LOCAL_DIMS[a] as i64;
        let cells = if max_cells < 0 {
            0
        } else {
            cells.clamp(0, max_cells)
        };
        origin[a] = scene.origin[a] + cells as f64 * h;
    }
    origin[2] = scene.origin[2];
    LocalBox {
        origin,
        dims: LOCAL_DIMS,
    }
}

/// Scene voxels whose centers lie in both the local box and the frustum.
pub fn visibility_mask(frame: &CameraFrame, local: &LocalBox, scene: &GridGeometry) -> Result<VoxelMask> {
    let off = scene
        .lattice_offset(&local.geometry(scene.voxel_size))
        .ok_or(Error::GeometryMismatch)?;
    let mut mask = VoxelMask::new(*scene);
    let range = |a: usize| {
        let lo = off[a].max(0);
        let hi = (off[a] + local.dims[a] as i64).min(scene.dims[a] as i64);
        lo as usize..hi.max(lo) as usize
    };
    let (k, pose) = (&frame.intrinsics, &frame.pose);
    for z in range(2) {
        for y in range(1) {
            for x in range(0) {
                let pc = world_to_camera(&scene.center(x, y, z), pose);
                if in_frustum_cam(&pc, k, Z_NEAR, Z_FAR) {
                    mask.bits[scene.index(x, y, z)] = true;
                }
            }
        }
    }
    Ok(mask)
}

/// Per-voxel re-evaluation over the whole scene grid.
pub fn visibility_mask_bruteforce(frame: &CameraFrame, local: &LocalBox, scene: &GridGeometry) -> VoxelMask {
    let lg = local.geometry(scene.voxel_size);
    let (lo, hi) = (lg.min_corner(), lg.max_corner());
    let mut mask = VoxelMask::new(*scene);
    for i in 0..scene.len() {
        let c = scene.center_of(i);
        let inside = (0..3).all(|a| c[a] > lo[a] && c[a] < hi[a]);
        mask.bits[i] = inside && in_frustum(&c, &frame.pose, &frame.intrinsics, Z_NEAR, Z_FAR);
    }
    mask
}

/// Element-wise OR of masks over the same grid.
pub fn splice_masks<'a, I>(masks: I) -> Result<VoxelMask>
where
    I: IntoIterator<Item = &'a VoxelMask>,
{
    let mut it = masks.into_iter();
    let first = it.next().ok_or_else(|| Error::InvalidConfig("no masks to splice".into()))?;
    let mut out = first.clone();
    for m in it {
        if !m.geometry.same_as(&out.geometry) || m.bits.len() != out.bits.len() {
            return Err(Error::GeometryMismatch);
        }
        for (o, &b) in out.bits.iter_mut().zip(&m.bits) {
            *o |= b;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, Pose, Vec3};
    use crate::grid::VOXEL_SIZE;

    fn scene() -> GridGeometry {
        GridGeometry::new([0.0; 3], [100, 90, 38], VOXEL_SIZE).unwrap()
    }

    #[test]
    fn box_ahead_of_camera_facing_x() {
        let big = GridGeometry::new([-8.0, -8.0, 0.0], [200, 200, 38], VOXEL_SIZE).unwrap();
        let f = CameraFrame::new(Intrinsics::default(), Pose::from_yaw_pitch(Vec3::zeros(), 0.0, 0.2));
        let b = local_box_for_frame(&f, &big);
        assert!((b.origin[0] - 0.0).abs() < 1e-9);
        assert!((b.origin[1] + 2.4).abs() < 1e-9);
        assert_eq!(b.origin[2], 0.0);
        assert_eq!(b.dims, [60, 60, 36]);
    }

    #[test]
    fn box_is_snapped_and_clamped() {
        let s = scene();
        let f = CameraFrame::new(
            Intrinsics::default(),
            Pose::from_yaw_pitch(Vec3::new(6.5, 1.03, 1.4), 0.3, 0.2),
        );
        let b = local_box_for_frame(&f, &s);
        for a in 0..3 {
            let cells = b.origin[a] / VOXEL_SIZE;
            assert!((cells - cells.round()).abs() < 1e-9);
        }
        assert!(b.origin[0] + 4.8 <= 8.0 + 1e-9);
        assert!(b.origin[1] >= 0.0);
        assert!(s.lattice_offset(&b.geometry(VOXEL_SIZE)).is_some());
    }

    #[test]
    fn mask_matches_bruteforce_and_lies_in_box() {
        let s = scene();
        for (i, yaw) in [0.0, 1.1, 2.5, -2.0].into_iter().enumerate() {
            let f = CameraFrame::new(
                Intrinsics::default(),
                Pose::from_yaw_pitch(Vec3::new(3.0 + i as f64 * 0.7, 3.3, 1.4), yaw, 0.3),
            );
            let b = local_box_for_frame(&f, &s);
            let m = visibility_mask(&f, &b, &s).unwrap();
            assert_eq!(m, visibility_mask_bruteforce(&f, &b, &s));
            assert!(m.count() > 0);
            // behind the camera is never visible
            let behind = f.pose.center() - f.pose.forward();
            if let Some([x, y, z]) = s.voxel_of(&behind) {
                assert!(!m.bits[s.index(x, y, z)]);
            }
        }
    }

    #[test]
    fn splice_rules() {
        let s = scene();
        let mut a = VoxelMask::new(s);
        let mut b = VoxelMask::new(s);
        a.bits[3] = true;
        b.bits[5] = true;
        assert_eq!(splice_masks([&a]).unwrap(), a);
        let ab = splice_masks([&a, &b]).unwrap();
        assert_eq!(ab.count(), 2);
        assert_eq!(splice_masks([&a, &b, &a, &b]).unwrap(), ab);
        assert!(a.is_subset_of(&ab));
        let other = VoxelMask::new(GridGeometry::new([0.0; 3], [2, 2, 2], VOXEL_SIZE).unwrap());
        assert!(matches!(splice_masks([&a, &other]), Err(Error::GeometryMismatch)));
        assert!(splice_masks(std::iter::empty()).is_err());
    }
}
