//! Staged refinement of camera-frame Gaussians.
//!
//! A [`Refiner`] proposes a [`GaussianDelta`] per Gaussian and stage; the
//! delta is damped by the Gaussian's confidence `θ` and then composed onto
//! the Gaussian (additive for mean/scale/opacity/logits, quaternion product
//! for rotation). [`OracleRefiner`] is the deterministic in-repo refiner
//! driven by a rendered depth/semantic observation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classes::{EMPTY, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::gaussian::{GaussianConfig, Logits, SemanticGaussian};
use crate::geometry::{
    compose_quaternions, project_to_pixel, slerp_from_identity, Intrinsics, Pose, Quat, Vec3,
};

/// Per-Gaussian update amounts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDelta {
    pub d_mean: Vec3,
    pub d_scale_raw: Vec3,
    pub d_rotation: Quat,
    pub d_opacity_raw: f64,
    pub d_logits: Logits,
}

impl GaussianDelta {
    pub const ZERO: GaussianDelta = GaussianDelta {
        d_mean: Vec3::new(0.0, 0.0, 0.0),
        d_scale_raw: Vec3::new(0.0, 0.0, 0.0),
        d_rotation: Quat::IDENTITY,
        d_opacity_raw: 0.0,
        d_logits: [0.0; NUM_CLASSES],
    };

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

/// Rendered depth and semantics for one posed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Row-major `H×W` z-depth in meters; 0 where the ray hit nothing.
    pub depth: Vec<f32>,
    /// Row-major `H×W` class labels.
    pub semantics: Vec<u8>,
    pub intrinsics: Intrinsics,
    pub pose: Pose,
}

impl Observation {
    pub fn new(depth: Vec<f32>, semantics: Vec<u8>, intrinsics: Intrinsics, pose: Pose) -> Result<Self> {
        let n = intrinsics.width * intrinsics.height;
        for len in [depth.len(), semantics.len()] {
            if len != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        if depth.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidConfig("depth must be finite and >= 0".into()));
        }
        Ok(Self {
            depth,
            semantics,
            intrinsics,
            pose,
        })
    }

    /// Nearest pixel to `(u, v)` after clamping into the image.
    pub fn pixel_index(&self, u: f64, v: f64) -> usize {
        let w = self.intrinsics.width;
        let h = self.intrinsics.height;
        let clampi = |x: f64, n: usize| -> usize {
            if !(x >= 0.0) {
                0
            } else {
                (x.floor() as usize).min(n - 1)
            }
        };
        clampi(v, h) * w + clampi(u, w)
    }

    pub fn semantic_at(&self, u: f64, v: f64) -> u8 {
        self.semantics[self.pixel_index(u, v)]
    }
}

/// Nearest-pixel depth lookup with clamping; 0 means no hit.
pub fn sample_depth(obs: &Observation, u: f64, v: f64) -> f64 {
    obs.depth[obs.pixel_index(u, v)] as f64
}

/// Where a Gaussian sits relative to the observed surface along its ray.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DepthRelation {
    /// In free space before the surface.
    Front,
    /// On or closely behind the surface.
    Surface,
    /// Far behind the surface.
    Occluded,
    /// The pixel saw nothing.
    NoDepth,
}

pub fn classify_depth_relation(z: f64, d: f64, delta_front: f64, band_behind: f64) -> DepthRelation {
    if d == 0.0 {
        DepthRelation::NoDepth
    } else if z < d - delta_front {
        DepthRelation::Front
    } else if z <= d + band_behind {
        DepthRelation::Surface
    } else {
        DepthRelation::Occluded
    }
}

/// Tuning of the depth-oracle refiner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    /// Margin in front of the observed depth still treated as surface (m).
    pub delta_front: f64,
    /// Depth band behind the observed depth treated as surface for untagged
    /// Gaussians (m). Wide enough to pull the inside of hollow objects onto
    /// their faces.
    pub band_behind: f64,
    /// Same band for tagged Gaussians (m). Narrow, so a Gaussian already
    /// placed on a surface is not pulled onto an occluder in front of it.
    pub band_behind_tagged: f64,
    /// Gaussians projecting outside the image by less than this lateral
    /// distance at their depth still read the border pixel (m).
    pub edge_margin: f64,
    /// Logit magnitude of the target class.
    pub beta: f64,
    /// Raw opacity target for Gaussians with evidence.
    pub opacity_target_raw: f64,
    /// Activated scale target for surface Gaussians (m).
    pub s_surface: f64,
    /// Activated scale target along the local axis closest to the observed
    /// surface normal (m). Equal to `s_surface` gives isotropic surfels.
    pub s_normal: f64,
    /// Distance the surface Gaussian is pushed behind the observed surface
    /// point along the estimated normal (m); half a voxel centers it in the
    /// surface layer.
    pub inset: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            delta_front: 0.04,
            band_behind: 0.8,
            band_behind_tagged: 0.12,
            edge_margin: 0.16,
            beta: 10.0,
            opacity_target_raw: 4.0,
            s_surface: 0.05,
            s_normal: 0.012,
            inset: 0.04,
        }
    }
}

impl OracleParams {
    pub fn band_for(&self, tagged: bool) -> f64 {
        if tagged {
            self.band_behind_tagged
        } else {
            self.band_behind
        }
    }
}

/// Produces update amounts for camera-frame Gaussians.
pub trait Refiner: Sync {
    fn delta(&self, g_cam: &SemanticGaussian, obs: &Observation, stage: usize) -> Result<GaussianDelta>;
}

impl<F> Refiner for F
where
    F: Fn(&SemanticGaussian, &Observation, usize) -> Result<GaussianDelta> + Sync,
{
    fn delta(&self, g_cam: &SemanticGaussian, obs: &Observation, stage: usize) -> Result<GaussianDelta> {
        self(g_cam, obs, stage)
    }
}

/// Relation of a camera-frame Gaussian to the observation, with its
/// projection. Gaussians projecting outside the image by more than
/// `edge_margin` count as `NoDepth`; those within it sample the nearest
/// border pixel.
pub fn relation_of(g_cam: &SemanticGaussian, obs: &Observation, params: &OracleParams) -> (DepthRelation, f64, f64, f64) {
    let k = &obs.intrinsics;
    let p = project_to_pixel(&g_cam.mean, k);
    let m = if p.behind_camera { 0.0 } else { k.fx * params.edge_margin / p.z };
    if p.behind_camera
        || !(p.u >= -m && p.u < k.width as f64 + m && p.v >= -m && p.v < k.height as f64 + m)
    {
        return (DepthRelation::NoDepth, p.u, p.v, 0.0);
    }
    let (u, v) = (p.u.clamp(0.0, k.width as f64 - 0.5), p.v.clamp(0.0, k.height as f64 - 0.5));
    let d = sample_depth(obs, u, v);
    (
        classify_depth_relation(p.z, d, params.delta_front, params.band_for(g_cam.tag)),
        u,
        v,
        d,
    )
}

/// Camera-frame unit normal of the observed surface at pixel `(u, v)`,
/// facing the camera, from back-projected neighbours roughly 0.12 m away.
/// On each image axis the neighbour whose depth is closer to the center
/// depth is used, so a depth edge on one side does not bend the normal.
pub fn surface_normal(obs: &Observation, u: f64, v: f64) -> Option<Vec3> {
    let k = &obs.intrinsics;
    let (w, h) = (k.width as i64, k.height as i64);
    let iu = (u.floor() as i64).clamp(0, w - 1);
    let iv = (v.floor() as i64).clamp(0, h - 1);
    let depth = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w || y >= h {
            0.0
        } else {
            obs.depth[(y * w + x) as usize] as f64
        }
    };
    let back = |x: i64, y: i64, d: f64| k.pixel_ray(x as f64 + 0.5, y as f64 + 0.5) * d;
    let d0 = depth(iu, iv);
    if d0 == 0.0 {
        return None;
    }
    let step = (k.fx * 0.12 / d0).round().clamp(2.0, 40.0) as i64;
    let p0 = back(iu, iv, d0);
    let tangent = |dx: i64, dy: i64| -> Option<Vec3> {
        let da = depth(iu + dx, iv + dy);
        let db = depth(iu - dx, iv - dy);
        let ea = if da > 0.0 { (da - d0).abs() } else { f64::INFINITY };
        let eb = if db > 0.0 { (db - d0).abs() } else { f64::INFINITY };
        if ea.is_infinite() && eb.is_infinite() {
            None
        } else if ea <= eb {
            Some(back(iu + dx, iv + dy, da) - p0)
        } else {
            Some(p0 - back(iu - dx, iv - dy, db))
        }
    };
    let n = tangent(step, 0)?.cross(&tangent(0, step)?);
    let len = n.norm();
    if !(len > 0.0) {
        return None;
    }
    let n = n / len;
    Some(if n.dot(&p0) > 0.0 { -n } else { n })
}

fn target_logits(class: u8, beta: f64, current: &Logits) -> Logits {
    let mut out = [0.0; NUM_CLASSES];
    for (c, o) in out.iter_mut().enumerate() {
        let target = if c == class as usize { beta } else { 0.0 };
        *o = target - current[c];
    }
    out
}

/// Depth-oracle update for one camera-frame Gaussian.
///
/// Front Gaussians are pushed towards opaque empty space; surface Gaussians
/// move onto the observed surface point along their pixel ray and take the
/// observed class; occluded or unobserved Gaussians get a zero delta.
pub fn oracle_delta(
    g_cam: &SemanticGaussian,
    obs: &Observation,
    params: &OracleParams,
    cfg: &GaussianConfig,
) -> GaussianDelta {
    let (relation, u, v, d) = relation_of(g_cam, obs, params);
    match relation {
        DepthRelation::Occluded | DepthRelation::NoDepth => GaussianDelta::ZERO,
        DepthRelation::Front => GaussianDelta {
            d_logits: target_logits(EMPTY, params.beta, &g_cam.logits),
            d_opacity_raw: params.opacity_target_raw - g_cam.opacity_raw,
            ..GaussianDelta::ZERO
        },
        DepthRelation::Surface => {
            let class = obs.semantic_at(u, v);
            let mut surface = obs.intrinsics.pixel_ray(u, v) * d;
            let mut s_target = Vec3::repeat(cfg.scale_raw_for(params.s_surface));
            if let Some(n) = surface_normal(obs, u, v) {
                // straight onto the local plane, then behind it; a Gaussian
                // already there stays put
                surface = g_cam.mean - n * ((g_cam.mean - surface).dot(&n) + params.inset);
                let local = g_cam.rotation.conj().rotate(&n);
                let axis = local.iamax();
                s_target[axis] = cfg.scale_raw_for(params.s_normal);
            }
            GaussianDelta {
                d_mean: surface - g_cam.mean,
                d_scale_raw: s_target - g_cam.scale_raw,
                d_rotation: Quat::IDENTITY,
                d_opacity_raw: params.opacity_target_raw - g_cam.opacity_raw,
                d_logits: target_logits(class, params.beta, &g_cam.logits),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRefiner {
    pub params: OracleParams,
    pub gaussian: GaussianConfig,
}

impl OracleRefiner {
    pub fn new(params: OracleParams, gaussian: GaussianConfig) -> Self {
        Self { params, gaussian }
    }
}

impl Refiner for OracleRefiner {
    fn delta(&self, g_cam: &SemanticGaussian, obs: &Observation, _stage: usize) -> Result<GaussianDelta> {
        Ok(oracle_delta(g_cam, obs, &self.params, &self.gaussian))
    }
}

/// Damps a delta by confidence `theta`: additive parts scale by `1 − θ`,
/// the rotation is slerped from identity by `1 − θ`.
pub fn scale_delta(d: &GaussianDelta, theta: f64) -> GaussianDelta {
    let f = 1.0 - theta;
    if theta == 0.0 {
        return *d;
    }
    GaussianDelta {
        d_mean: d.d_mean * f,
        d_scale_raw: d.d_scale_raw * f,
        d_rotation: slerp_from_identity(&d.d_rotation, f),
        d_opacity_raw: d.d_opacity_raw * f,
        d_logits: d.d_logits.map(|l| l * f),
    }
}

/// `(Δm + m, Δs + s, Δr ⊗ r, Δo + o, Δc + c)`; the tag is untouched.
pub fn apply_delta(g: &SemanticGaussian, d: &GaussianDelta) -> Result<SemanticGaussian> {
    let rotation = if d.d_rotation == Quat::IDENTITY {
        g.rotation
    } else {
        compose_quaternions(&d.d_rotation, &g.rotation)?
    };
    let mut logits = g.logits;
    for (l, dl) in logits.iter_mut().zip(&d.d_logits) {
        *l += dl;
    }
    Ok(SemanticGaussian {
        mean: g.mean + d.d_mean,
        scale_raw: g.scale_raw + d.d_scale_raw,
        rotation,
        opacity_raw: g.opacity_raw + d.d_opacity_raw,
        logits,
        tag: g.tag,
    })
}

/// Per-stage confidences for tagged and untagged Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSchedule {
    pub theta_tagged: Vec<f64>,
    pub theta_untagged: Vec<f64>,
}

impl Default for ConfidenceSchedule {
    fn default() -> Self {
        Self {
            theta_tagged: vec![0.0, 0.0, 0.5],
            theta_untagged: vec![0.0; 3],
        }
    }
}

impl ConfidenceSchedule {
    /// Same confidence for both tag states at every stage.
    pub fn uniform(stages: usize, theta: f64) -> Self {
        Self {
            theta_tagged: vec![theta; stages],
            theta_untagged: vec![theta; stages],
        }
    }

    pub fn stages(&self) -> usize {
        self.theta_tagged.len()
    }

    pub fn theta(&self, tagged: bool, stage: usize) -> f64 {
        if tagged {
            self.theta_tagged[stage]
        } else {
            self.theta_untagged[stage]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta_tagged.len() != self.theta_untagged.len() {
            return Err(Error::InvalidConfig(
                "tagged and untagged schedules need the same number of stages".into(),
            ));
        }
        if self
            .theta_tagged
            .iter()
            .chain(&self.theta_untagged)
            .any(|t| !(0.0..=1.0).contains(t))
        {
            return Err(Error::InvalidConfig("confidence values must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Runs every stage of the schedule over a camera-frame view. Output order
/// matches input order.
pub fn refine_frustum(
    view: &[SemanticGaussian],
    tags: &[bool],
    obs: &Observation,
    schedule: &ConfidenceSchedule,
    refiner: &dyn Refiner,
) -> Result<Vec<SemanticGaussian>> {
    if view.len() != tags.len() {
        return Err(Error::LengthMismatch {
            expected: view.len(),
            actual: tags.len(),
        });
    }
    schedule.validate()?;
    let mut current = view.to_vec();
    for stage in 0..schedule.stages() {
        current = current
            .par_iter()
            .zip(tags.par_iter())
            .map(|(g, &tagged)| {
                let theta = schedule.theta(tagged, stage);
                if theta == 1.0 {
                    return Ok(*g);
                }
                let d = refiner.delta(g, obs, stage)?;
                apply_delta(g, &scale_delta(&d, theta))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(current)
}
