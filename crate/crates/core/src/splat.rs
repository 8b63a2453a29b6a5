//! Gaussian-to-voxel splatting.
//!
//! Every voxel center `v` accumulates `opacity · exp(−½ (v−m)ᵀ Σ⁻¹ (v−m)) ·
//! class_probs` from each Gaussian. With a finite cutoff a Gaussian only
//! reaches voxels within `cutoff_sigmas · max(scale)` of its mean.

use rayon::prelude::*;

use crate::classes::{EMPTY, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::gaussian::{activate, covariance, GaussianConfig, Logits, SemanticGaussian};
use crate::geometry::{rotation_matrix, Mat3, Vec3};
use crate::grid::{GridGeometry, VoxelGrid};

/// Default cutoff in units of the largest activated scale.
pub const DEFAULT_CUTOFF_SIGMAS: f64 = 3.0;
/// Total mass below which a voxel reads as empty.
pub const DEFAULT_TAU_EMPTY: f64 = 1e-4;

/// Accumulated per-class mass on a voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticVolume {
    pub geometry: GridGeometry,
    pub accum: Vec<Logits>,
}

impl SemanticVolume {
    pub fn zeros(geometry: GridGeometry) -> Self {
        Self {
            accum: vec![[0.0; NUM_CLASSES]; geometry.len()],
            geometry,
        }
    }

    pub fn max_abs_diff(&self, other: &SemanticVolume) -> f64 {
        self.accum
            .iter()
            .zip(&other.accum)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Per-voxel class probabilities (normalized mass; uniform where no mass).
    pub fn class_probs(&self) -> Vec<Logits> {
        self.accum
            .iter()
            .map(|a| {
                let total: f64 = a.iter().sum();
                if total > 0.0 {
                    a.map(|v| v / total)
                } else {
                    [1.0 / NUM_CLASSES as f64; NUM_CLASSES]
                }
            })
            .collect()
    }
}

/// Splat-ready form of one Gaussian.
struct Kernel {
    mean: Vec3,
    precision: Mat3,
    opacity: f64,
    probs: Logits,
    radius: f64,
}

fn kernel(g: &SemanticGaussian, cfg: &GaussianConfig, cutoff_sigmas: f64) -> Result<Kernel> {
    let a = activate(g, cfg);
    if !a.scale.iter().all(|s| *s > 0.0 && s.is_finite()) || !g.is_finite() {
        return Err(Error::NonSpdCovariance);
    }
    let r = rotation_matrix(&g.rotation);
    let inv_sq = a.scale.map(|s| 1.0 / (s * s));
    let precision = r * Mat3::from_diagonal(&inv_sq) * r.transpose();
    Ok(Kernel {
        mean: g.mean,
        precision: (precision + precision.transpose()) * 0.5,
        opacity: a.opacity,
        probs: a.class_probs,
        radius: cutoff_sigmas * a.scale.max(),
    })
}

#[inline]
fn add_contribution(acc: &mut Logits, k: &Kernel, v: &Vec3, use_cutoff: bool) {
    let d = v - k.mean;
    if use_cutoff && d.norm_squared() > k.radius * k.radius {
        return;
    }
    let m = d.dot(&(k.precision * d));
    let w = k.opacity * (-0.5 * m).exp();
    if w == 0.0 {
        return;
    }
    for (a, p) in acc.iter_mut().zip(&k.probs) {
        *a += w * p;
    }
}

/// Uniform spatial hash of Gaussian kernels, cells in CSR order.
struct Bins {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    items: Vec<usize>,
}

impl Bins {
    fn build(kernels: &[Kernel], geometry: &GridGeometry) -> Self {
        let max_r = kernels.iter().map(|k| k.radius).fold(0.0, f64::max);
        let cell = max_r.max(geometry.voxel_size);
        let lo = geometry.min_corner();
        let hi = geometry.max_corner();
        let origin = lo - Vec3::repeat(cell);
        let dims = [0, 1, 2].map(|a| (((hi[a] - origin[a]) / cell).floor() as usize) + 2);
        let cell_of = |p: &Vec3| -> Option<usize> {
            let mut c = [0usize; 3];
            for a in 0..3 {
                let f = ((p[a] - origin[a]) / cell).floor();
                if !(f >= 0.0) || f >= dims[a] as f64 {
                    return None;
                }
                c[a] = f as usize;
            }
            Some(c[0] + dims[0] * (c[1] + dims[1] * c[2]))
        };
        let ncell = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncell + 1];
        let cells: Vec<Option<usize>> = kernels.iter().map(|k| cell_of(&k.mean)).collect();
        for c in cells.iter().flatten() {
            counts[c + 1] += 1;
        }
        for i in 0..ncell {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0usize; counts[ncell]];
        for (gi, c) in cells.iter().enumerate() {
            if let Some(c) = c {
                items[fill[*c]] = gi;
                fill[*c] += 1;
            }
        }
        Self {
            origin,
            cell,
            dims,
            starts: counts,
            items,
        }
    }

    fn for_each_near(&self, v: &Vec3, mut f: impl FnMut(usize)) {
        let c = [0, 1, 2].map(|a| ((v[a] - self.origin[a]) / self.cell).floor() as i64);
        for dz in -1..=1 {
            let z = c[2] + dz;
            if z < 0 || z >= self.dims[2] as i64 {
                continue;
            }
            for dy in -1..=1 {
                let y = c[1] + dy;
                if y < 0 || y >= self.dims[1] as i64 {
                    continue;
                }
                for dx in -1..=1 {
                    let x = c[0] + dx;
                    if x < 0 || x >= self.dims[0] as i64 {
                        continue;
                    }
                    let cell = x as usize + self.dims[0] * (y as usize + self.dims[1] * z as usize);
                    for &gi in &self.items[self.starts[cell]..self.starts[cell + 1]] {
                        f(gi);
                    }
                }
            }
        }
    }
}

/// Splats `gaussians` onto `geometry`. `cutoff_sigmas = f64::INFINITY`
/// disables the cutoff.
pub fn splat(
    gaussians: &[SemanticGaussian],
    cfg: &GaussianConfig,
    geometry: &GridGeometry,
    cutoff_sigmas: f64,
) -> Result<SemanticVolume> {
    if !(cutoff_sigmas > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cutoff_sigmas must be positive, got {cutoff_sigmas}"
        )));
    }
    let kernels = gaussians
        .iter()
        .map(|g| kernel(g, cfg, cutoff_sigmas))
        .collect::<Result<Vec<_>>>()?;
    let mut vol = SemanticVolume::zeros(*geometry);
    if kernels.is_empty() {
        return Ok(vol);
    }
    let slice = geometry.dims[0] * geometry.dims[1];
    if cutoff_sigmas.is_finite() {
        let bins = Bins::build(&kernels, geometry);
        vol.accum
            .par_chunks_mut(slice)
            .enumerate()
            .for_each(|(z, chunk)| {
                for (j, acc) in chunk.iter_mut().enumerate() {
                    let v = geometry.center_of(z * slice + j);
                    bins.for_each_near(&v, |gi| add_contribution(acc, &kernels[gi], &v, true));
                }
            });
        // Gaussians outside the binned region (far from the grid) cannot
        // reach it within their cutoff, since cells are at least one radius.
    } else {
        vol.accum
            .par_chunks_mut(slice)
            .enumerate()
            .for_each(|(z, chunk)| {
                for (j, acc) in chunk.iter_mut().enumerate() {
                    let v = geometry.center_of(z * slice + j);
                    for k in &kernels {
                        add_contribution(acc, k, &v, false);
                    }
                }
            });
    }
    Ok(vol)
}

/// Reference splat: naive voxel × Gaussian loop, explicit covariance
/// inversion, no cutoff.
pub fn splat_bruteforce(
    gaussians: &[SemanticGaussian],
    cfg: &GaussianConfig,
    geometry: &GridGeometry,
) -> Result<SemanticVolume> {
    let mut vol = SemanticVolume::zeros(*geometry);
    let prepared = gaussians
        .iter()
        .map(|g| {
            let sigma = covariance(g, cfg);
            let inv = sigma.try_inverse().ok_or(Error::NonSpdCovariance)?;
            let a = activate(g, cfg);
            Ok((g.mean, inv, a.opacity, a.class_probs))
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, acc) in vol.accum.iter_mut().enumerate() {
        let v = geometry.center_of(i);
        for (mean, inv, opacity, probs) in &prepared {
            let d = v - mean;
            let w = opacity * (-0.5 * (d.transpose() * inv * d)[(0, 0)]).exp();
            for c in 0..NUM_CLASSES {
                acc[c] += w * probs[c];
            }
        }
    }
    Ok(vol)
}

/// Empty below `tau_empty` total mass, otherwise the argmax class (lowest
/// index on ties).
pub fn labels_from_volume(vol: &SemanticVolume, tau_empty: f64) -> VoxelGrid {
    let labels = vol
        .accum
        .iter()
        .map(|a| {
            let total: f64 = a.iter().sum();
            if !(total >= tau_empty) {
                return EMPTY;
            }
            let mut best = 0usize;
            for c in 1..NUM_CLASSES {
                if a[c] > a[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    VoxelGrid {
        geometry: vol.geometry,
        labels,
    }
}
