//! Semantic Gaussians, their bounded activations, and the per-scene memory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classes::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::geometry::{
    camera_to_world, in_frustum_cam, rotation_matrix, world_to_camera, Intrinsics, Mat3, Pose,
    Quat, Vec3,
};

pub type Logits = [f64; NUM_CLASSES];

/// One scene primitive. Scale and opacity are stored pre-activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticGaussian {
    pub mean: Vec3,
    pub scale_raw: Vec3,
    pub rotation: Quat,
    pub opacity_raw: f64,
    pub logits: Logits,
    /// Set once the Gaussian has been written back after a refinement.
    pub tag: bool,
}

impl SemanticGaussian {
    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|v| v.is_finite())
            && self.scale_raw.iter().all(|v| v.is_finite())
            && self.rotation.is_finite()
            && self.opacity_raw.is_finite()
            && self.logits.iter().all(|v| v.is_finite())
    }

    /// Bit-level equality, including the sign of zeros and NaN payloads.
    pub fn bit_eq(&self, other: &SemanticGaussian) -> bool {
        let bits = |g: &SemanticGaussian| {
            let mut v = Vec::with_capacity(23);
            v.extend(g.mean.iter().map(|x| x.to_bits()));
            v.extend(g.scale_raw.iter().map(|x| x.to_bits()));
            v.extend([g.rotation.w, g.rotation.x, g.rotation.y, g.rotation.z].map(f64::to_bits));
            v.push(g.opacity_raw.to_bits());
            v.extend(g.logits.iter().map(|x| x.to_bits()));
            v
        };
        self.tag == other.tag && bits(self) == bits(other)
    }
}

/// Bounds and densities for Gaussian initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianConfig {
    pub s_min: f64,
    pub s_max: f64,
    /// Lattice spacing of the scene memory (m).
    pub interval: f64,
    /// Number of Gaussians filling one local box.
    pub local_count: usize,
    /// Seed for random initial logits; `None` gives the uniform prior.
    #[serde(default)]
    pub random_logits_seed: Option<u64>,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            s_min: 0.01,
            s_max: 0.08,
            interval: 0.16,
            local_count: 16200,
            random_logits_seed: None,
        }
    }
}

impl GaussianConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min > 0.0 && self.s_min < self.s_max && self.s_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scale bounds must satisfy 0 < s_min < s_max (got {} / {})",
                self.s_min, self.s_max
            )));
        }
        if !(self.interval > 0.0 && self.interval.is_finite()) {
            return Err(Error::InvalidConfig("interval must be positive".into()));
        }
        if self.local_count == 0 {
            return Err(Error::InvalidConfig("local_count must be positive".into()));
        }
        Ok(())
    }

    /// Raw scale value whose activation is `s` (clamped into the open range).
    pub fn scale_raw_for(&self, s: f64) -> f64 {
        let f = ((s - self.s_min) / (self.s_max - self.s_min)).clamp(1e-6, 1.0 - 1e-6);
        logit(f)
    }

    /// A fresh Gaussian at `mean` with the initialization prior.
    pub fn prior_gaussian(&self, mean: Vec3) -> SemanticGaussian {
        SemanticGaussian {
            mean,
            scale_raw: Vec3::zeros(),
            rotation: Quat::IDENTITY,
            opacity_raw: 0.0,
            logits: [0.0; NUM_CLASSES],
            tag: false,
        }
    }
}

/// Axis-aligned box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            p.x.clamp(self.min[0], self.max[0]),
            p.y.clamp(self.min[1], self.max[1]),
            p.z.clamp(self.min[2], self.max[2]),
        )
    }
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn softmax(logits: &Logits) -> Logits {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Activated (physical) parameters of one Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activated {
    pub scale: Vec3,
    pub opacity: f64,
    pub class_probs: Logits,
}

pub fn activate(g: &SemanticGaussian, cfg: &GaussianConfig) -> Activated {
    let span = cfg.s_max - cfg.s_min;
    Activated {
        scale: g.scale_raw.map(|r| cfg.s_min + span * logistic(r)),
        opacity: logistic(g.opacity_raw),
        class_probs: softmax(&g.logits),
    }
}

/// `Σ = R·diag(s)²·Rᵀ` from an activated scale.
pub fn covariance_from(rotation: &Quat, scale: &Vec3) -> Mat3 {
    let r = rotation_matrix(rotation);
    let d = Mat3::from_diagonal(&scale.component_mul(scale));
    let s = r * d * r.transpose();
    // exact symmetry
    (s + s.transpose()) * 0.5
}

pub fn covariance(g: &SemanticGaussian, cfg: &GaussianConfig) -> Mat3 {
    covariance_from(&g.rotation, &activate(g, cfg).scale)
}

/// Persistent world-frame set of Gaussians for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMemory {
    pub gaussians: Vec<SemanticGaussian>,
    pub bounds: Aabb,
    pub interval: f64,
}

/// Lattice dimensions `floor(extent / interval)` per axis.
pub fn lattice_dims(bounds: &Aabb, interval: f64) -> [usize; 3] {
    let e = bounds.extent();
    // Tolerate representation error in extents that are exact multiples.
    e.map(|v| ((v / interval) + 1e-9).floor().max(0.0) as usize)
}

/// Fills `bounds` with Gaussians at the cell centers of a regular lattice.
pub fn init_memory_uniform(bounds: &Aabb, cfg: &GaussianConfig) -> Result<GaussianMemory> {
    cfg.validate()?;
    let dims = lattice_dims(bounds, cfg.interval);
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::SceneTooSmall(format!(
            "extent {:?} is smaller than one interval of {} m",
            bounds.extent(),
            cfg.interval
        )));
    }
    let mut rng = cfg.random_logits_seed.map(ChaCha8Rng::seed_from_u64);
    let h = cfg.interval;
    let mut gaussians = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let mean = Vec3::new(
                    bounds.min[0] + (x as f64 + 0.5) * h,
                    bounds.min[1] + (y as f64 + 0.5) * h,
                    bounds.min[2] + (z as f64 + 0.5) * h,
                );
                let mut g = cfg.prior_gaussian(mean);
                if let Some(rng) = rng.as_mut() {
                    for l in &mut g.logits {
                        *l = rng.random_range(-1.0..1.0);
                    }
                }
                gaussians.push(g);
            }
        }
    }
    Ok(GaussianMemory {
        gaussians,
        bounds: *bounds,
        interval: cfg.interval,
    })
}

/// Frame change of a Gaussian: `mean' = R·mean + t`, `rot' = q_R ⊗ rot`.
fn transform_gaussian(g: &SemanticGaussian, r: &Quat, mean: Vec3) -> SemanticGaussian {
    SemanticGaussian {
        mean,
        rotation: r.hamilton(&g.rotation),
        ..*g
    }
}

/// Camera-frame copy of a world-frame Gaussian.
pub fn to_camera_frame(g: &SemanticGaussian, pose: &Pose) -> SemanticGaussian {
    let q = pose.rotation_quat().conj();
    transform_gaussian(g, &q, world_to_camera(&g.mean, pose))
}

/// World-frame copy of a camera-frame Gaussian.
pub fn to_world_frame(g: &SemanticGaussian, pose: &Pose) -> SemanticGaussian {
    let q = pose.rotation_quat();
    transform_gaussian(g, &q, camera_to_world(&g.mean, pose))
}

/// Gaussians whose means lie inside a camera frustum.
#[derive(Debug, Clone, Default)]
pub struct FrustumSelection {
    pub indices: Vec<usize>,
    /// Camera-frame copies, parallel to `indices`.
    pub view: Vec<SemanticGaussian>,
}

impl GaussianMemory {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn tagged_count(&self) -> usize {
        self.gaussians.iter().filter(|g| g.tag).count()
    }

    pub fn select_frustum(
        &self,
        pose: &Pose,
        k: &Intrinsics,
        z_near: f64,
        z_far: f64,
    ) -> FrustumSelection {
        let mut sel = FrustumSelection::default();
        for (i, g) in self.gaussians.iter().enumerate() {
            let pc = world_to_camera(&g.mean, pose);
            if in_frustum_cam(&pc, k, z_near, z_far) {
                sel.indices.push(i);
                sel.view.push(to_camera_frame(g, pose));
            }
        }
        sel
    }

    /// Puts refined camera-frame Gaussians back, clamping means to the scene
    /// bounds and setting every written tag.
    ///
    /// A Gaussian whose camera-frame state is bit-identical to what
    /// `select_frustum` would hand out keeps its stored world values, so an
    /// unmodified round trip only flips tags.
    pub fn write_back(
        &mut self,
        indices: &[usize],
        updated: &[SemanticGaussian],
        pose: &Pose,
    ) -> Result<()> {
        if indices.len() != updated.len() {
            return Err(Error::LengthMismatch {
                expected: indices.len(),
                actual: updated.len(),
            });
        }
        let n = self.gaussians.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        for (&i, u) in indices.iter().zip(updated) {
            let current = &mut self.gaussians[i];
            let unchanged = {
                let mut view = to_camera_frame(current, pose);
                view.tag = u.tag;
                view.bit_eq(u)
            };
            if !unchanged {
                let mut w = to_world_frame(u, pose);
                w.rotation = w.rotation.normalized().unwrap_or(Quat::IDENTITY);
                w.mean = self.bounds.clamp(&w.mean);
                *current = w;
            }
            current.tag = true;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{in_frustum, Z_FAR, Z_NEAR};
    use approx::assert_abs_diff_eq;

    fn cube(side: f64) -> Aabb {
        Aabb::new([0.0; 3], [side; 3])
    }

    #[test]
    fn uniform_init_counts_and_prior() {
        let cfg = GaussianConfig::default();
        let mem = init_memory_uniform(&cube(4.8), &cfg).unwrap();
        assert_eq!(mem.len(), 27000);
        assert!(mem.gaussians.iter().all(|g| !g.tag));
        let a = activate(&mem.gaussians[0], &cfg);
        assert_abs_diff_eq!(a.scale.x, 0.045, epsilon = 1e-15);
        assert_eq!(a.opacity, 0.5);
        assert!(a.class_probs.iter().all(|&p| (p - 1.0 / 12.0).abs() < 1e-15));
        assert_abs_diff_eq!(mem.gaussians[0].mean, Vec3::new(0.08, 0.08, 0.08), epsilon = 1e-15);
    }

    #[test]
    fn uniform_init_is_deterministic() {
        let cfg = GaussianConfig {
            random_logits_seed: Some(9),
            ..Default::default()
        };
        let a = init_memory_uniform(&cube(1.0), &cfg).unwrap();
        let b = init_memory_uniform(&cube(1.0), &cfg).unwrap();
        assert!(a.gaussians.iter().zip(&b.gaussians).all(|(x, y)| x.bit_eq(y)));
        assert!(a.gaussians[0].logits.iter().any(|&l| l != 0.0));
    }

    #[test]
    fn too_small_scene_rejected() {
        let cfg = GaussianConfig::default();
        let b = Aabb::new([0.0; 3], [1.0, 0.1, 1.0]);
        assert!(matches!(
            init_memory_uniform(&b, &cfg),
            Err(Error::SceneTooSmall(_))
        ));
    }

    #[test]
    fn activation_bounds_hold_for_extreme_raw_values() {
        let cfg = GaussianConfig::default();
        let mut g = cfg.prior_gaussian(Vec3::zeros());
        for raw in [-800.0, -30.0, 0.0, 30.0, 800.0] {
            g.scale_raw = Vec3::repeat(raw);
            g.opacity_raw = raw;
            let a = activate(&g, &cfg);
            assert!(a.scale.iter().all(|&s| s >= cfg.s_min && s <= cfg.s_max));
            assert!((0.0..=1.0).contains(&a.opacity));
        }
        g.logits[5] = 700.0;
        let p = activate(&g, &cfg).class_probs;
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scale_raw_inverse() {
        let cfg = GaussianConfig::default();
        let mut g = cfg.prior_gaussian(Vec3::zeros());
        g.scale_raw = Vec3::repeat(cfg.scale_raw_for(0.05));
        assert_abs_diff_eq!(activate(&g, &cfg).scale.x, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn covariance_examples() {
        let s = Vec3::new(0.02, 0.05, 0.07);
        let c = covariance_from(&Quat::IDENTITY, &s);
        assert_abs_diff_eq!(c, Mat3::from_diagonal(&Vec3::new(4e-4, 25e-4, 49e-4)), epsilon = 1e-18);
        let q = Quat::from_axis_angle(&Vec3::z(), std::f64::consts::FRAC_PI_2);
        let c = covariance_from(&q, &s);
        assert_abs_diff_eq!(c, Mat3::from_diagonal(&Vec3::new(25e-4, 4e-4, 49e-4)), epsilon = 1e-15);
    }

    #[test]
    fn single_gaussian_selected_on_axis() {
        let cfg = GaussianConfig::default();
        let mut mem = init_memory_uniform(&cube(0.16), &cfg).unwrap();
        mem.gaussians[0].mean = Vec3::new(0.0, 0.0, 1.0);
        let sel = mem.select_frustum(&Pose::identity(), &Intrinsics::default(), Z_NEAR, Z_FAR);
        assert_eq!(sel.indices, vec![0]);
        assert_eq!(sel.view[0].mean, Vec3::new(0.0, 0.0, 1.0));
        let away = Pose::from_yaw_pitch(Vec3::new(-1.0, 0.0, 1.0), std::f64::consts::PI, 0.0);
        assert!(mem
            .select_frustum(&away, &Intrinsics::default(), Z_NEAR, Z_FAR)
            .indices
            .is_empty());
    }

    #[test]
    fn selection_matches_bruteforce() {
        let cfg = GaussianConfig::default();
        let mem = init_memory_uniform(&cube(3.2), &cfg).unwrap();
        let pose = Pose::from_yaw_pitch(Vec3::new(0.3, 1.6, 1.4), 0.4, 0.3);
        let k = Intrinsics::default();
        let sel = mem.select_frustum(&pose, &k, Z_NEAR, Z_FAR);
        let brute: Vec<usize> = (0..mem.len())
            .filter(|&i| in_frustum(&mem.gaussians[i].mean, &pose, &k, Z_NEAR, Z_FAR))
            .collect();
        assert_eq!(sel.indices, brute);
        assert!(!brute.is_empty());
    }

    #[test]
    fn unmodified_write_back_only_sets_tags() {
        let cfg = GaussianConfig::default();
        let mut mem = init_memory_uniform(&cube(3.2), &cfg).unwrap();
        let before = mem.clone();
        let pose = Pose::from_yaw_pitch(Vec3::new(0.3, 1.6, 1.4), 0.4, 0.3);
        let sel = mem.select_frustum(&pose, &Intrinsics::default(), Z_NEAR, Z_FAR);
        mem.write_back(&sel.indices, &sel.view, &pose).unwrap();
        for (i, (a, b)) in mem.gaussians.iter().zip(&before.gaussians).enumerate() {
            let selected = sel.indices.binary_search(&i).is_ok();
            assert_eq!(a.tag, selected);
            let mut a = *a;
            a.tag = b.tag;
            assert!(a.bit_eq(b));
        }
    }

    #[test]
    fn write_back_clamps_and_checks_lengths() {
        let cfg = GaussianConfig::default();
        let mut mem = init_memory_uniform(&cube(3.2), &cfg).unwrap();
        let pose = Pose::from_yaw_pitch(Vec3::new(0.3, 1.6, 1.4), 0.0, 0.0);
        let mut sel = mem.select_frustum(&pose, &Intrinsics::default(), Z_NEAR, Z_FAR);
        sel.view[0].mean.z = 100.0;
        assert!(mem.write_back(&sel.indices, &sel.view[1..], &pose).is_err());
        assert!(mem.write_back(&[usize::MAX], &sel.view[..1], &pose).is_err());
        mem.write_back(&sel.indices, &sel.view, &pose).unwrap();
        let g = &mem.gaussians[sel.indices[0]];
        assert!(mem.bounds.contains(&g.mean));
        assert!(g.tag);
    }
}
