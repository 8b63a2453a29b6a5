use std::collections::HashMap;

use crate::classes::{EMPTY, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::grid::{GridGeometry, VoxelGrid};

/// Voxels with no labeled point within this distance stay empty (m).
pub const KNN_D_MAX: f64 = 0.24;

/// Labels each voxel center of `target` by majority vote among its `k`
/// nearest labeled points within `d_max`.
///
/// Majority ties go to the tied class whose point is nearest; distance ties
/// go to the lower point index.
pub fn knn_label_transfer(
    points: &[(Vec3, u8)],
    target: &GridGeometry,
    k: usize,
    d_max: f64,
) -> Result<VoxelGrid> {
    if points.is_empty() {
        return Err(Error::InvalidConfig("no labeled points".into()));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if let Some((_, l)) = points.iter().find(|(_, l)| *l as usize >= NUM_CLASSES) {
        return Err(Error::InvalidConfig(format!("point label {l} out of range")));
    }
    let cell = d_max.max(1e-9);
    let key = |p: &Vec3| -> [i64; 3] { [0, 1, 2].map(|a| (p[a] / cell).floor() as i64) };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, (p, _)) in points.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(i);
    }
    let d2_max = d_max * d_max;
    let mut out = VoxelGrid::empty(*target);
    let mut cand: Vec<(f64, usize)> = Vec::new();
    for vi in 0..target.len() {
        let c = target.center_of(vi);
        let kc = key(&c);
        cand.clear();
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(ids) = buckets.get(&[kc[0] + dx, kc[1] + dy, kc[2] + dz]) {
                        for &i in ids {
                            let d2 = (points[i].0 - c).norm_squared();
                            if d2 <= d2_max {
                                cand.push((d2, i));
                            }
                        }
                    }
                }
            }
        }
        if cand.is_empty() {
            continue;
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &cand[..k.min(cand.len())];
        let mut votes = [0usize; NUM_CLASSES];
        for &(_, i) in nearest {
            votes[points[i].1 as usize] += 1;
        }
        let best = *votes.iter().max().unwrap();
        // nearest point whose class is among the tied winners
        let label = nearest
            .iter()
            .map(|&(_, i)| points[i].1)
            .find(|&l| votes[l as usize] == best)
            .unwrap_or(EMPTY);
        out.labels[vi] = label;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VOXEL_SIZE;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn target() -> GridGeometry {
        GridGeometry::new([0.0; 3], [12, 10, 8], VOXEL_SIZE).unwrap()
    }

    /// O(N·M) nearest-neighbor scan.
    fn brute_nn(points: &[(Vec3, u8)], t: &GridGeometry, d_max: f64) -> Vec<u8> {
        (0..t.len())
            .map(|vi| {
                let c = t.center_of(vi);
                let mut best: Option<(f64, usize)> = None;
                for (i, (p, _)) in points.iter().enumerate() {
                    let d2 = (p - c).norm_squared();
                    if best.is_none_or(|(bd, _)| d2 < bd) {
                        best = Some((d2, i));
                    }
                }
                match best {
                    Some((d2, i)) if d2 <= d_max * d_max => points[i].1,
                    _ => EMPTY,
                }
            })
            .collect()
    }

    #[test]
    fn single_point_labels_its_neighbourhood() {
        let t = target();
        let p = Vec3::new(0.4, 0.4, 0.3);
        let g = knn_label_transfer(&[(p, 7)], &t, 1, KNN_D_MAX).unwrap();
        for vi in 0..t.len() {
            let within = (t.center_of(vi) - p).norm() <= KNN_D_MAX;
            assert_eq!(g.labels[vi] == 7, within);
        }
    }

    #[test]
    fn k1_matches_bruteforce() {
        let t = target();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<_> = (0..150)
            .map(|_| {
                (
                    Vec3::new(
                        rng.random_range(0.0..0.96),
                        rng.random_range(0.0..0.8),
                        rng.random_range(0.0..0.64),
                    ),
                    rng.random_range(1..12u8),
                )
            })
            .collect();
        let g = knn_label_transfer(&pts, &t, 1, KNN_D_MAX).unwrap();
        assert_eq!(g.labels, brute_nn(&pts, &t, KNN_D_MAX));
    }

    #[test]
    fn equidistant_points_prefer_lower_index() {
        let t = GridGeometry::new([0.0; 3], [1, 1, 1], VOXEL_SIZE).unwrap();
        let c = t.center(0, 0, 0);
        let pts = [(c + Vec3::new(0.05, 0.0, 0.0), 3), (c + Vec3::new(0.0, 0.05, 0.0), 5)];
        assert_eq!(knn_label_transfer(&pts, &t, 1, KNN_D_MAX).unwrap().labels[0], 3);
        assert_eq!(knn_label_transfer(&pts, &t, 2, KNN_D_MAX).unwrap().labels[0], 3);
        let swapped = [pts[1], pts[0]];
        assert_eq!(knn_label_transfer(&swapped, &t, 1, KNN_D_MAX).unwrap().labels[0], 5);
    }

    #[test]
    fn majority_vote_with_k3() {
        let t = GridGeometry::new([0.0; 3], [1, 1, 1], VOXEL_SIZE).unwrap();
        let c = t.center(0, 0, 0);
        let pts = [
            (c + Vec3::new(0.01, 0.0, 0.0), 4),
            (c + Vec3::new(0.02, 0.0, 0.0), 6),
            (c + Vec3::new(0.03, 0.0, 0.0), 6),
        ];
        assert_eq!(knn_label_transfer(&pts, &t, 3, KNN_D_MAX).unwrap().labels[0], 6);
        assert_eq!(knn_label_transfer(&pts, &t, 1, KNN_D_MAX).unwrap().labels[0], 4);
    }

    #[test]
    fn bad_inputs() {
        let t = target();
        assert!(knn_label_transfer(&[], &t, 1, KNN_D_MAX).is_err());
        assert!(knn_label_transfer(&[(Vec3::zeros(), 1)], &t, 0, KNN_D_MAX).is_err());
        assert!(knn_label_transfer(&[(Vec3::zeros(), 40)], &t, 1, KNN_D_MAX).is_err());
    }
}
