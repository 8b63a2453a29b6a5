//! Dense voxel grids, boolean voxel masks, and their binary file formats.
//!
//! Voxel `(x, y, z)` lives at linear index `x + X·(y + Y·z)` and its center at
//! `origin + (i + ½)·voxel_size`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Ground-truth voxel size of every scene (m).
pub const VOXEL_SIZE: f64 = 0.08;

const OCCG_MAGIC: &[u8; 4] = b"OCCG";
const OCCG_VERSION: u32 = 1;
const OCCG_HEADER_LEN: usize = 4 + 4 + 12 + 4 + 12;

/// Placement and resolution of a voxel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub origin: [f64; 3],
    pub dims: [usize; 3],
    pub voxel_size: f64,
}

impl GridGeometry {
    pub fn new(origin: [f64; 3], dims: [usize; 3], voxel_size: f64) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) || !(voxel_size > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grid dims {dims:?} / voxel size {voxel_size} must be positive"
            )));
        }
        Ok(Self {
            origin,
            dims,
            voxel_size,
        })
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let yz = index / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    #[inline]
    pub fn center(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let h = self.voxel_size;
        Vec3::new(
            self.origin[0] + (x as f64 + 0.5) * h,
            self.origin[1] + (y as f64 + 0.5) * h,
            self.origin[2] + (z as f64 + 0.5) * h,
        )
    }

    pub fn center_of(&self, index: usize) -> Vec3 {
        let [x, y, z] = self.coords(index);
        self.center(x, y, z)
    }

    pub fn min_corner(&self) -> Vec3 {
        Vec3::from(self.origin)
    }

    pub fn max_corner(&self) -> Vec3 {
        let h = self.voxel_size;
        Vec3::new(
            self.origin[0] + self.dims[0] as f64 * h,
            self.origin[1] + self.dims[1] as f64 * h,
            self.origin[2] + self.dims[2] as f64 * h,
        )
    }

    /// Voxel containing `p`, if any.
    pub fn voxel_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.voxel_size).floor();
            if !(f >= 0.0) || f >= self.dims[a] as f64 {
                return None;
            }
            out[a] = f as usize;
        }
        Some(out)
    }

    /// Integer voxel offset of `other`'s origin in this grid's lattice, if the
    /// two lattices coincide.
    pub fn lattice_offset(&self, other: &GridGeometry) -> Option<[i64; 3]> {
        if (self.voxel_size - other.voxel_size).abs() > 1e-12 {
            return None;
        }
        let mut off = [0i64; 3];
        for a in 0..3 {
            let f = (other.origin[a] - self.origin[a]) / self.voxel_size;
            let r = f.round();
            if (f - r).abs() > 1e-6 {
                return None;
            }
            off[a] = r as i64;
        }
        Some(off)
    }

    pub fn same_as(&self, other: &GridGeometry) -> bool {
        self.dims == other.dims
            && (self.voxel_size - other.voxel_size).abs() <= 1e-9
            && (0..3).all(|a| (self.origin[a] - other.origin[a]).abs() <= 1e-9)
    }
}

/// Dense semantic occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub geometry: GridGeometry,
    pub labels: Vec<u8>,
}

impl VoxelGrid {
    pub fn empty(geometry: GridGeometry) -> Self {
        Self {
            labels: vec![0; geometry.len()],
            geometry,
        }
    }

    pub fn from_labels(geometry: GridGeometry, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != geometry.len() {
            return Err(Error::LengthMismatch {
                expected: geometry.len(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Malformed {
                what: "voxel grid",
                detail: format!("label {bad} out of range"),
            });
        }
        Ok(Self { geometry, labels })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.geometry.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u8) {
        let i = self.geometry.index(x, y, z);
        self.labels[i] = label;
    }

    /// Label of the voxel containing `p`; empty outside the grid.
    pub fn label_at(&self, p: &Vec3) -> u8 {
        self.geometry
            .voxel_of(p)
            .map(|[x, y, z]| self.get(x, y, z))
            .unwrap_or(0)
    }

    /// Copies the sub-grid described by `target` (which must share this
    /// grid's lattice); voxels outside this grid read as empty.
    pub fn crop(&self, target: &GridGeometry) -> Result<VoxelGrid> {
        let off = self
            .geometry
            .lattice_offset(target)
            .ok_or(Error::GeometryMismatch)?;
        let mut out = VoxelGrid::empty(*target);
        let d = self.geometry.dims;
        for z in 0..target.dims[2] {
            let gz = z as i64 + off[2];
            if gz < 0 || gz >= d[2] as i64 {
                continue;
            }
            for y in 0..target.dims[1] {
                let gy = y as i64 + off[1];
                if gy < 0 || gy >= d[1] as i64 {
                    continue;
                }
                for x in 0..target.dims[0] {
                    let gx = x as i64 + off[0];
                    if gx < 0 || gx >= d[0] as i64 {
                        continue;
                    }
                    let l = self.get(gx as usize, gy as usize, gz as usize);
                    out.set(x, y, z, l);
                }
            }
        }
        Ok(out)
    }

    pub fn histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0usize; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Serializes to the OCCG1 layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = Vec::with_capacity(OCCG_HEADER_LEN + self.labels.len());
        out.extend_from_slice(OCCG_MAGIC);
        out.extend_from_slice(&OCCG_VERSION.to_le_bytes());
        for d in g.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(g.voxel_size as f32).to_le_bytes());
        for o in g.origin {
            out.extend_from_slice(&(o as f32).to_le_bytes());
        }
        out.extend_from_slice(&self.labels);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Truncated("occupancy grid"));
        }
        if &bytes[..4] != OCCG_MAGIC {
            return Err(Error::BadMagic("OCCG"));
        }
        if bytes.len() < OCCG_HEADER_LEN {
            return Err(Error::Truncated("occupancy grid"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != OCCG_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "OCCG",
                version,
            });
        }
        let dims = [u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize];
        let voxel_size = f32_at(20) as f64;
        let origin = [f32_at(24) as f64, f32_at(28) as f64, f32_at(32) as f64];
        let geometry = GridGeometry::new(origin, dims, voxel_size).map_err(|e| Error::Malformed {
            what: "occupancy grid header",
            detail: e.to_string(),
        })?;
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(Error::Malformed {
                what: "occupancy grid header",
                detail: "dims overflow".into(),
            })?;
        let body = &bytes[OCCG_HEADER_LEN..];
        if body.len() < n {
            return Err(Error::Truncated("occupancy grid"));
        }
        if body.len() > n {
            return Err(Error::Malformed {
                what: "occupancy grid",
                detail: format!("{} trailing bytes", body.len() - n),
            });
        }
        VoxelGrid::from_labels(geometry, body.to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Boolean mask over the voxels of one grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMask {
    pub geometry: GridGeometry,
    pub bits: Vec<bool>,
}

impl VoxelMask {
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            bits: vec![false; geometry.len()],
            geometry,
        }
    }

    pub fn full(geometry: GridGeometry) -> Self {
        Self {
            bits: vec![true; geometry.len()],
            geometry,
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &VoxelMask) -> bool {
        self.bits.len() == other.bits.len()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Copies the sub-mask over `target`; voxels outside this mask are false.
    pub fn crop(&self, target: &GridGeometry) -> Result<VoxelMask> {
        let off = self
            .geometry
            .lattice_offset(target)
            .ok_or(Error::GeometryMismatch)?;
        let mut out = VoxelMask::new(*target);
        let d = self.geometry.dims;
        for i in 0..target.len() {
            let c = target.coords(i);
            let g = [c[0] as i64 + off[0], c[1] as i64 + off[1], c[2] as i64 + off[2]];
            if (0..3).all(|a| g[a] >= 0 && g[a] < d[a] as i64) {
                out.bits[i] =
                    self.bits[self.geometry.index(g[0] as usize, g[1] as usize, g[2] as usize)];
            }
        }
        Ok(out)
    }

    /// Little-endian bit packing, least significant bit first within a byte.
    pub fn to_packed(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn from_packed(geometry: GridGeometry, bytes: &[u8]) -> Result<Self> {
        let n = geometry.len();
        let need = n.div_ceil(8);
        if bytes.len() < need {
            return Err(Error::Truncated("voxel mask"));
        }
        if bytes.len() > need {
            return Err(Error::Malformed {
                what: "voxel mask",
                detail: format!("expected {need} bytes, got {}", bytes.len()),
            });
        }
        let bits = (0..n).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self { geometry, bits })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_packed())?;
        Ok(())
    }

    pub fn load(geometry: GridGeometry, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_packed(geometry, &fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> GridGeometry {
        GridGeometry::new([0.0, 0.08, -0.16], [5, 4, 3], VOXEL_SIZE).unwrap()
    }

    #[test]
    fn index_and_coords_agree() {
        let g = geom();
        for i in 0..g.len() {
            let [x, y, z] = g.coords(i);
            assert_eq!(g.index(x, y, z), i);
            assert_eq!(g.voxel_of(&g.center(x, y, z)), Some([x, y, z]));
        }
        assert_eq!(g.index(1, 2, 1), 1 + 5 * (2 + 4));
    }

    #[test]
    fn occg_header_layout() {
        let mut grid = VoxelGrid::empty(geom());
        grid.set(1, 2, 0, 7);
        let bytes = grid.to_bytes();
        assert_eq!(&bytes[..4], b"OCCG");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 5);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(bytes[20..24].try_into().unwrap()), 0.08f32);
        assert_eq!(bytes.len(), 36 + 60);
        assert_eq!(bytes[36 + 11], 7);
    }

    #[test]
    fn occg_errors() {
        let grid = VoxelGrid::empty(geom());
        let bytes = grid.to_bytes();
        assert!(matches!(
            VoxelGrid::from_bytes(&bytes[..40]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(
            VoxelGrid::from_bytes(&bytes[..10]),
            Err(Error::Truncated(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(VoxelGrid::from_bytes(&bad), Err(Error::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            VoxelGrid::from_bytes(&bad),
            Err(Error::UnsupportedVersion { .. })
        ));
        let mut bad = bytes.clone();
        bad[40] = 200;
        assert!(matches!(
            VoxelGrid::from_bytes(&bad),
            Err(Error::Malformed { .. })
        ));
        let mut bad = bytes;
        bad[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(VoxelGrid::from_bytes(&bad).is_err());
    }

    #[test]
    fn mask_packing_is_lsb_first() {
        let g = GridGeometry::new([0.0; 3], [10, 1, 1], 1.0).unwrap();
        let mut m = VoxelMask::new(g);
        m.bits[0] = true;
        m.bits[3] = true;
        m.bits[9] = true;
        assert_eq!(m.to_packed(), vec![0b0000_1001, 0b0000_0010]);
        assert_eq!(VoxelMask::from_packed(g, &m.to_packed()).unwrap(), m);
        assert!(matches!(
            VoxelMask::from_packed(g, &[0]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn crop_reads_outside_as_empty() {
        let mut grid = VoxelGrid::empty(geom());
        grid.set(4, 3, 2, 3);
        let target = GridGeometry::new([0.24, 0.24, 0.0], [3, 3, 3], VOXEL_SIZE).unwrap();
        let c = grid.crop(&target).unwrap();
        // global (4,3,2) sits at local (1,1,0)
        assert_eq!(c.get(1, 1, 0), 3);
        assert_eq!(c.histogram()[3], 1);
        let off = GridGeometry::new([0.01, 0.0, 0.0], [2, 2, 2], VOXEL_SIZE).unwrap();
        assert!(grid.crop(&off).is_err());
    }
}
